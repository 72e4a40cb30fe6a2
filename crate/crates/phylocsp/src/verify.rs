//! A scriptable battery of the library's cross-module invariants, exposed
//! through the CLI `verify` subcommand. Each check is small, deterministic,
//! and independent of the others.

use crate::assign::{alpha_exact, sample_solution, BiasedMeasure};
use crate::coarse::{coarsen, is_in_class, val_pm};
use crate::csp::{
    brute_force_opt, gaifman, gen_random_instance, is_regular, opt_given_order, value, Instance,
};
use crate::gap::{build_gap, cousins, lkm_weight, optimal_coupling, satisfying_solution, GapSpec};
use crate::pattern::{compile_to_brackets, enumerate_patterns, eval_brackets, match_pattern};
use crate::problems::{
    aho_build, builtin_registry, quartet_satisfied, triplet_payoff, triplets_to_quartets,
    BuildOutcome, QuartetConstraint, TripletConstraint,
};
use crate::tree::{build_caterpillar, build_perfect, Side, Tree};
use crate::Result;
use num_rational::BigRational;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Check {
    pub group: &'static str,
    pub name: &'static str,
    pub run: fn() -> Result<()>,
}

fn ensure(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(crate::Error::Inconsistent(msg.to_string()))
    }
}

fn tree_checks() -> Result<()> {
    for s in ["((lion,tiger),tuna);", "(((1,2),3),(4,(5,6)));"] {
        let t = Tree::parse_newick(s)?;
        ensure(t.to_newick() == s, "newick round trip must be bit-exact")?;
    }
    let t = build_caterpillar(5, Side::Left)?;
    ensure(
        t.to_newick() == "((((1,2),3),4),5);",
        "caterpillar construction",
    )?;
    let p = build_perfect(3, 2)?;
    ensure(p.leaf_count() == 9, "perfect tree leaf count")?;
    let keep: Vec<_> = ["2", "5", "9"]
        .iter()
        .map(|l| p.find_leaf(l).unwrap())
        .collect();
    let r = p.restrict(&keep)?;
    let again = r.restrict(&r.leaves())?;
    ensure(
        r.canonical_string() == again.canonical_string(),
        "restriction must be idempotent",
    )
}

fn pattern_checks() -> Result<()> {
    ensure(
        enumerate_patterns(3, 2)?.len() == 12,
        "12 ordered patterns at k=3",
    )?;
    ensure(
        enumerate_patterns(4, 2)?.len() == 120,
        "120 ordered patterns at k=4",
    )?;
    // compiler equivalence on a small exhaustive slice
    let patterns = enumerate_patterns(3, 2)?;
    let compiled: Vec<_> = patterns.iter().map(compile_to_brackets).collect();
    let tree = Tree::parse_newick("((a,b),(c,d));")?;
    let leaves = tree.leaves();
    for sel in crate::pattern::permutations(4) {
        let asg = [leaves[sel[0]], leaves[sel[1]], leaves[sel[2]]];
        let matched = match_pattern(&tree, &asg)?.key();
        for (p, preds) in patterns.iter().zip(&compiled) {
            let holds = eval_brackets(preds, &tree, &asg)?;
            ensure(
                holds == (p.key() == matched),
                "bracket compiler equivalence",
            )?;
        }
    }
    Ok(())
}

fn csp_checks() -> Result<()> {
    let reg = builtin_registry();
    let inst = Instance::parse("vars a b c\n1 triplet a b c\n1 triplet a c b\n", &reg)?;
    let (v, _) = brute_force_opt(&inst)?;
    ensure(
        (v - 0.5).abs() < 1e-12,
        "opt of two conflicting triplets is 1/2",
    )?;
    let order: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let (v, _) = opt_given_order(&inst, &order)?;
    ensure(
        (v - 0.5).abs() < 1e-12,
        "order-constrained opt of the pair is 1/2",
    )?;
    let g = gaifman(&inst);
    ensure(
        (g.total_weight() - 3.0).abs() < 1e-12,
        "gaifman total weight",
    )?;
    ensure(is_regular(&inst), "symmetric instance must be regular")
}

fn assign_checks() -> Result<()> {
    let f = triplet_payoff();
    let a = alpha_exact(&BiasedMeasure::uniform_splitting(), &f)?;
    ensure(
        (a - 1.0 / 3.0).abs() < 1e-12,
        "uniform splitting scores 1/3 on triplets",
    )?;
    let m = BiasedMeasure::caterpillar_bias(0.2, 6)?;
    let b = alpha_exact(&m, &f)?;
    ensure(
        (b - 1.0 / 3.0).abs() < 1e-12,
        "every measure scores 1/3 on triplets",
    )
}

fn gap_checks() -> Result<()> {
    let spec = GapSpec::new(triplet_payoff(), 2)?;
    let inst = build_gap(&spec)?;
    ensure(inst.total_weight().is_one(), "gap weights sum to 1 exactly")?;
    ensure(
        inst.constraints().len() == 30,
        "gap constraint count at k=3,d=2",
    )?;
    ensure(is_regular(&inst), "gap instances are regular")?;
    let w = lkm_weight(&spec, &["1", "4", "7"])?;
    ensure(
        w == BigRational::new(1.into(), 54.into()),
        "root-level tuple weight 1/54",
    )?;
    let base = spec.base_tree();
    let leaves: Vec<_> = ["1", "4", "9"]
        .iter()
        .map(|l| base.find_leaf(l).unwrap())
        .collect();
    ensure(
        cousins(&base, &leaves)?,
        "one leaf per subtree in order is cousins",
    )?;
    let sol = satisfying_solution(&spec)?;
    ensure(
        value(&sol, &inst)? == 1.0,
        "pattern substitution satisfies the gap instance",
    )?;
    let c = optimal_coupling(&[1.0, 0.0], &[0.5, 0.5])?;
    ensure(
        (c.off_diagonal_mass() - 0.5).abs() < 1e-12,
        "coupling off-diagonal equals TV",
    )
}

fn coarse_checks() -> Result<()> {
    let f = triplet_payoff();
    for seed in 0..10u64 {
        let n = 4 + (seed as usize % 8);
        let inst = gen_random_instance(n, 2 * n, &f, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sol = sample_solution(&BiasedMeasure::uniform_splitting(), inst.vars(), &mut rng)?;
        let out = coarsen(&sol, 0.5)?;
        ensure(
            is_in_class(&out.solution, 0.5, 32, &sol.order())?,
            "coarsened solutions stay admissible",
        )?;
        let (lo, hi) = val_pm(&out.solution, &inst)?;
        let v = value(&sol, &inst)?;
        ensure(
            lo <= hi + 1e-15 && hi >= v - 1e-12,
            "val- <= val+ and val+ >= value",
        )?;
    }
    Ok(())
}

fn problem_checks() -> Result<()> {
    let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let conflict = [
        TripletConstraint::new("a", "b", "c"),
        TripletConstraint::new("a", "c", "b"),
    ];
    ensure(
        matches!(aho_build(&conflict, &labels)?, BuildOutcome::Inconsistent),
        "conflicting triplets must be reported",
    )?;
    // quartet pairings partition the binary 4-leaf patterns
    for p in enumerate_patterns(4, 2)? {
        let t = p.tree();
        let sat = [
            QuartetConstraint::new("x1", "x2", "x3", "x4"),
            QuartetConstraint::new("x1", "x3", "x2", "x4"),
            QuartetConstraint::new("x1", "x4", "x2", "x3"),
        ]
        .iter()
        .filter(|q| quartet_satisfied(t, q).unwrap())
        .count();
        ensure(sat == 1, "exactly one quartet pairing holds")?;
    }
    // reduction keeps counts on a sample tree
    let reg = builtin_registry();
    let inst = Instance::parse("vars a b c d\n1 triplet a b c\n1 triplet b c d\n", &reg)?;
    let (q, gamma) = triplets_to_quartets(&inst)?;
    let t = Tree::parse_newick("((a,b),(c,d));")?;
    let sol = crate::csp::Solution::from_leaf_labels(&t)?;
    let v1 = value(&sol, &inst)?;
    let surrogate = crate::problems::attach_gamma(&t, &gamma);
    let sol2 = crate::csp::Solution::from_leaf_labels(&surrogate)?;
    let v2 = value(&sol2, &q)?;
    ensure(
        (v1 - v2).abs() < 1e-12,
        "gamma-rooting preserves satisfied weight",
    )
}

/// The full battery.
pub fn all_checks() -> Vec<Check> {
    vec![
        Check {
            group: "tree",
            name: "construction, restriction, newick",
            run: tree_checks,
        },
        Check {
            group: "patterns",
            name: "enumeration and bracket compiler",
            run: pattern_checks,
        },
        Check {
            group: "csp",
            name: "optima, gaifman, regularity",
            run: csp_checks,
        },
        Check {
            group: "assign",
            name: "exact thresholds",
            run: assign_checks,
        },
        Check {
            group: "gap",
            name: "weights, cousins, satisfiability, coupling",
            run: gap_checks,
        },
        Check {
            group: "coarse",
            name: "admissibility and value bracketing",
            run: coarse_checks,
        },
        Check {
            group: "problems",
            name: "build, quartets, reduction",
            run: problem_checks,
        },
    ]
}

/// Runs checks whose group or name contains `filter` (all when `None`).
pub fn run_filtered(filter: Option<&str>) -> Vec<(String, Result<()>)> {
    all_checks()
        .into_iter()
        .filter(|c| filter.is_none_or(|f| c.group.contains(f) || c.name.contains(f)))
        .map(|c| (format!("{}: {}", c.group, c.name), (c.run)()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_is_green() {
        for (name, outcome) in run_filtered(None) {
            assert!(outcome.is_ok(), "{name}: {:?}", outcome.err());
        }
    }

    #[test]
    fn filter_selects_groups() {
        assert_eq!(run_filtered(Some("coarse")).len(), 1);
        assert!(run_filtered(Some("nope")).is_empty());
    }
}
