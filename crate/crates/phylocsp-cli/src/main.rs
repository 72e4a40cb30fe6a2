//! Command-line workbench around the phylocsp library: instance generation,
//! exact solving, reductions, randomized-assignment thresholds, and the
//! experiment suites. Every run is deterministic given flags, inputs, and
//! the seed (flag `--seed`, else `PHYLOCSP_SEED`, else 0).

use clap::{Args, Parser, Subcommand};
use phylocsp::assign::{alpha_mc, alpha_opt_search, BiasedMeasure, SearchConfig};
use phylocsp::csp::{
    brute_force_opt_capped, gen_random_instance, opt_given_order_capped, value, Instance,
};
use phylocsp::gap::{
    build_gap, child_label_divergence, coupling_experiment, divergence_bound, order_experiment,
    GapSpec, OrderSample,
};
use phylocsp::pattern::PayoffRegistry;
use phylocsp::problems::{resolve_payoff, triplets_to_quartets};
use phylocsp::tree::build_perfect;
use phylocsp::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::io::Read;
use std::path::PathBuf;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "phylocsp", version, about = "Phylogenetic CSP workbench")]
struct Cli {
    /// RNG seed; defaults to PHYLOCSP_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra payoff registry file (pattern tables).
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Write the report or generated file here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the level-sampled gap instance for a payoff.
    GenGap(GenGap),
    /// Generate a uniformly weighted random instance.
    GenRandom(GenRandom),
    /// Exact optimum by exhaustive enumeration.
    SolveBrute(SolveBrute),
    /// Exact optimum over trees with a fixed leaf order.
    SolveOrder(SolveOrder),
    /// Monte-Carlo value of uniform recursive splitting.
    SolveRandom(SolveRandom),
    /// Grid search for the best biased-assignment measure.
    AlphaSearch(AlphaSearch),
    /// Instance-to-instance reductions.
    #[command(subcommand)]
    Reduce(Reduce),
    /// Experiment suites with JSON reports.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Run the invariant battery and/or validate an instance file.
    Verify(Verify),
}

#[derive(Args)]
struct GenGap {
    #[arg(long)]
    payoff: String,
    /// Expected arity; checked against the payoff when given.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: usize,
}

#[derive(Args)]
struct GenRandom {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    constraints: usize,
    #[arg(long)]
    payoff: String,
}

#[derive(Args)]
struct SolveBrute {
    /// Instance file; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = phylocsp::csp::DEFAULT_BRUTE_CAP)]
    cap: usize,
}

#[derive(Args)]
struct SolveOrder {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated variable order.
    #[arg(long)]
    order: String,
    #[arg(long, default_value_t = phylocsp::csp::DEFAULT_ORDER_CAP)]
    cap: usize,
}

#[derive(Args)]
struct SolveRandom {
    /// Instance file; stdin when omitted unless --payoff generates one.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate a random instance of this payoff instead of reading one.
    #[arg(long)]
    payoff: Option<String>,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    constraints: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
}

#[derive(Args)]
struct AlphaSearch {
    #[arg(long)]
    payoff: String,
    #[arg(long, default_value_t = 4)]
    depth_cap: usize,
    #[arg(long, default_value_t = 20)]
    grid_resolution: usize,
    #[arg(long, default_value_t = 2000)]
    point_budget: usize,
    #[arg(long, default_value_t = 2)]
    refine_rounds: usize,
    /// Cross-check the winner by Monte Carlo with this many trials.
    #[arg(long)]
    mc_check: Option<u64>,
}

#[derive(Subcommand)]
enum Reduce {
    /// Rewrite a triplet instance as a quartet instance over V + {gamma}.
    TripletsToQuartets(ReduceArgs),
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Experiment {
    /// Distribution of opt(I | pi) over random leaf orders of a gap instance.
    GapOrder(GapOrder),
    /// Max monochromatic Gaifman weight over admissible coarse colorings.
    Monochrome(Monochrome),
    /// Child-label divergence of labelings of a perfect tree.
    Divergence(Divergence),
    /// Coupled random map: uniform marginals and cousin preservation.
    Coupling(Coupling),
}

#[derive(Args)]
struct GapOrder {
    #[arg(long)]
    payoff: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: usize,
    /// Evaluate every order exactly (m <= 8).
    #[arg(long, conflicts_with = "orders")]
    all_orders: bool,
    #[arg(long, default_value_t = 200)]
    orders: usize,
}

#[derive(Args)]
struct Monochrome {
    #[arg(long, default_value = "triplet")]
    payoff: String,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    q: usize,
    #[arg(long, default_value_t = 200)]
    orders: usize,
    /// Constant in the m* threshold q log(q/eps) / eps^2.
    #[arg(long, default_value_t = 1.0)]
    big_c: f64,
}

#[derive(Args)]
struct Divergence {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    q: usize,
    /// random | subtree | mod
    #[arg(long, default_value = "random")]
    labeling: String,
    /// Number of random labelings (ignored for the deterministic ones).
    #[arg(long, default_value_t = 50)]
    trials: usize,
}

#[derive(Args)]
struct Coupling {
    #[arg(long = "M", value_name = "M")]
    m: usize,
    #[arg(long)]
    dprime: usize,
    /// Arity of the source tree; the smallest root of M when omitted.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
}

#[derive(Args)]
struct Verify {
    /// Validate this instance file (stdin with `-`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Run only checks whose group or name contains this string.
    #[arg(long)]
    filter: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Resource { .. } => 3,
                Error::Inconsistent(_) => 1,
                _ => 2,
            }
        }
    };
    std::process::exit(code);
}

fn seed_of(cli: &Cli) -> u64 {
    cli.seed
        .or_else(|| {
            std::env::var("PHYLOCSP_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0)
}

fn registry_of(cli: &Cli) -> Result<PayoffRegistry> {
    let mut reg = phylocsp::problems::builtin_registry();
    if let Some(path) = &cli.registry {
        let text = std::fs::read_to_string(path)?;
        for f in PayoffRegistry::parse(&text)?.iter() {
            reg.insert(f.clone());
        }
    }
    Ok(reg)
}

fn read_instance(path: &Option<PathBuf>, reg: &PayoffRegistry) -> Result<Instance> {
    let text = match path {
        Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p)?,
        _ => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    Instance::parse(&text, reg)
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json(cli: &Cli, mut report: serde_json::Value) -> Result<()> {
    let obj = report.as_object_mut().expect("reports are objects");
    obj.insert("tool_version".into(), json!(VERSION));
    obj.insert("seed".into(), json!(seed_of(cli)));
    let mut text = serde_json::to_string_pretty(&report).expect("serializable");
    text.push('\n');
    emit(cli, &text)
}

fn run(cli: Cli) -> Result<i32> {
    let seed = seed_of(&cli);
    let reg = registry_of(&cli)?;
    match &cli.command {
        Command::GenGap(a) => {
            let payoff = resolve_payoff(&a.payoff, Some(&reg))?;
            if let Some(k) = a.k {
                if k != payoff.arity() {
                    return Err(Error::InvalidArgument(format!(
                        "payoff {} has arity {}, not {k}",
                        a.payoff,
                        payoff.arity()
                    )));
                }
            }
            let spec = GapSpec::new(payoff, a.d)?;
            let inst = build_gap(&spec)?;
            emit(&cli, &inst.to_text())?;
            Ok(0)
        }
        Command::GenRandom(a) => {
            let payoff = resolve_payoff(&a.payoff, Some(&reg))?;
            let inst = gen_random_instance(a.n, a.constraints, &payoff, seed)?;
            emit(&cli, &inst.to_text())?;
            Ok(0)
        }
        Command::SolveBrute(a) => {
            let inst = read_instance(&a.input, &reg)?;
            let (opt, sol) = brute_force_opt_capped(&inst, a.cap)?;
            emit_json(
                &cli,
                json!({
                    "command": "solve-brute",
                    "optimum": opt,
                    "tree": sol.tree.to_newick(),
                    "order": sol.order(),
                    "cap": a.cap,
                }),
            )?;
            Ok(0)
        }
        Command::SolveOrder(a) => {
            let inst = read_instance(&a.input, &reg)?;
            let order: Vec<String> = a.order.split(',').map(|s| s.trim().to_string()).collect();
            let (opt, sol) = opt_given_order_capped(&inst, &order, a.cap)?;
            emit_json(
                &cli,
                json!({
                    "command": "solve-order",
                    "optimum": opt,
                    "order": order,
                    "tree": sol.tree.to_newick(),
                    "cap": a.cap,
                }),
            )?;
            Ok(0)
        }
        Command::SolveRandom(a) => {
            let inst = match &a.payoff {
                Some(name) => {
                    let payoff = resolve_payoff(name, Some(&reg))?;
                    gen_random_instance(a.n, a.constraints, &payoff, seed)?
                }
                None => read_instance(&a.input, &reg)?,
            };
            let measure = BiasedMeasure::uniform_splitting();
            let values: Vec<f64> = (0..a.trials)
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(t);
                    let sol = phylocsp::assign::sample_solution(&measure, inst.vars(), &mut rng)
                        .expect("instance has variables");
                    value(&sol, &inst).expect("solution covers the instance")
                })
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            emit_json(
                &cli,
                json!({
                    "command": "solve-random",
                    "trials": a.trials,
                    "mean": mean,
                    "stderr": sd / n.sqrt(),
                }),
            )?;
            Ok(0)
        }
        Command::AlphaSearch(a) => {
            let payoff = resolve_payoff(&a.payoff, Some(&reg))?;
            let cfg = SearchConfig {
                depth_cap: a.depth_cap,
                grid_resolution: a.grid_resolution,
                point_budget: a.point_budget,
                refine_rounds: a.refine_rounds,
                ..SearchConfig::default()
            };
            let mut report = alpha_opt_search(&payoff, &cfg)?;
            if let Some(trials) = a.mc_check {
                let measure = BiasedMeasure::new(
                    phylocsp::tree::Tree::parse_newick(&report.measure_skeleton)?,
                    report.measure_leaf_probs.clone(),
                )?;
                let (mean, hw) = alpha_mc(&measure, &payoff, trials, seed)?;
                report.mc_mean = Some(mean);
                report.mc_half_width = Some(hw);
            }
            emit_json(&cli, serde_json::to_value(&report).expect("serializable"))?;
            Ok(0)
        }
        Command::Reduce(Reduce::TripletsToQuartets(a)) => {
            let inst = read_instance(&a.input, &reg)?;
            let (out, gamma) = triplets_to_quartets(&inst)?;
            emit(&cli, &out.to_text())?;
            eprintln!("gamma: {gamma}");
            Ok(0)
        }
        Command::Experiment(Experiment::GapOrder(a)) => {
            let payoff = resolve_payoff(&a.payoff, Some(&reg))?;
            if let Some(k) = a.k {
                if k != payoff.arity() {
                    return Err(Error::InvalidArgument(format!(
                        "payoff {} has arity {}, not {k}",
                        a.payoff,
                        payoff.arity()
                    )));
                }
            }
            let spec = GapSpec::new(payoff, a.d)?;
            let sample = if a.all_orders {
                OrderSample::All
            } else {
                OrderSample::Random(a.orders)
            };
            let report = order_experiment(&spec, sample, seed)?;
            emit_json(
                &cli,
                json!({
                    "command": "experiment gap-order",
                    "payoff": a.payoff,
                    "k": spec.k(),
                    "d": a.d,
                    "mean": report.mean,
                    "stderr": report.stderr,
                    "exhaustive": report.exhaustive,
                    "orders": report.values.len(),
                    "values": report.values,
                }),
            )?;
            Ok(0)
        }
        Command::Experiment(Experiment::Monochrome(a)) => {
            let payoff = resolve_payoff(&a.payoff, Some(&reg))?;
            let spec = GapSpec::new(payoff, a.d)?;
            let inst = build_gap(&spec)?;
            let report = phylocsp::coarse::monochrome_experiment(
                &inst, a.eps, a.q, a.orders, seed, a.big_c,
            )?;
            emit_json(
                &cli,
                json!({
                    "command": "experiment monochrome",
                    "payoff": a.payoff,
                    "d": a.d,
                    "eps": a.eps,
                    "q": a.q,
                    "mean": report.mean,
                    "bound": report.bound,
                    "weight_total": report.weight_total,
                    "m_star": report.m_star,
                    "bound_applicable": report.bound_applicable,
                    "exact_inner_max": report.exact_inner_max,
                    "per_order_max": report.per_order_max,
                }),
            )?;
            Ok(0)
        }
        Command::Experiment(Experiment::Divergence(a)) => {
            let tree = build_perfect(a.k, a.d)?;
            let m = tree.leaf_count();
            if a.q == 0 {
                return Err(Error::InvalidArgument("q must be positive".into()));
            }
            let labelings: Vec<Vec<usize>> = match a.labeling.as_str() {
                "random" => (0..a.trials)
                    .map(|t| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(t as u64);
                        (0..m).map(|_| rng.gen_range(0..a.q)).collect()
                    })
                    .collect(),
                "subtree" => {
                    // label by top-level subtree index
                    vec![(0..m).map(|i| (i * a.k / m) % a.q).collect()]
                }
                "mod" => vec![(0..m).map(|i| i % a.q).collect()],
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown labeling {other}; use random|subtree|mod"
                    )))
                }
            };
            let bound = divergence_bound(a.q, a.d);
            let values: Vec<f64> = labelings
                .iter()
                .map(|l| child_label_divergence(&tree, l))
                .collect::<Result<_>>()?;
            let max = values.iter().cloned().fold(0.0, f64::max);
            emit_json(
                &cli,
                json!({
                    "command": "experiment divergence",
                    "k": a.k,
                    "d": a.d,
                    "q": a.q,
                    "labeling": a.labeling,
                    "bound": bound,
                    "max": max,
                    "all_within_bound": max <= bound,
                    "values": values,
                }),
            )?;
            Ok(0)
        }
        Command::Experiment(Experiment::Coupling(a)) => {
            let k = a.k.unwrap_or_else(|| smallest_base(a.m));
            let report = coupling_experiment(a.m, a.dprime, k, a.trials, seed)?;
            emit_json(&cli, serde_json::to_value(&report).expect("serializable"))?;
            Ok(0)
        }
        Command::Verify(a) => {
            if let Some(path) = &a.input {
                let inst = read_instance(&Some(path.clone()), &reg)?;
                inst.validate_normalized()?;
                println!(
                    "instance ok: {} variables, {} constraints",
                    inst.var_count(),
                    inst.constraints().len()
                );
            }
            let results = phylocsp::verify::run_filtered(a.filter.as_deref());
            let mut failed = 0;
            for (name, outcome) in &results {
                match outcome {
                    Ok(()) => println!("ok   {name}"),
                    Err(e) => {
                        failed += 1;
                        println!("FAIL {name}: {e}");
                    }
                }
            }
            if a.input.is_none() && results.is_empty() {
                return Err(Error::InvalidArgument("filter matched no checks".into()));
            }
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

/// Smallest b >= 2 with b^a = m for integer a.
fn smallest_base(m: usize) -> usize {
    for b in 2..=m {
        let mut x = m;
        while x.is_multiple_of(b) {
            x /= b;
        }
        if x == 1 {
            return b;
        }
    }
    m
}
