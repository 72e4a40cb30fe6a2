//! The level-sampled gap-instance family and its companions: cousins, the
//! pattern-substitution satisfying solution, order experiments, the
//! child-label divergence check, and coupled random maps.
//!
//! The gap instance for an arity-k payoff lives on the leaves of a perfect
//! k-ary tree of depth d. A constraint is placed on every k-tuple of
//! cousins, weighted by the law of the map that picks a uniform level
//! `i < d`, a uniform node `u` at that level, and then one uniform leaf per
//! child subtree of `u`: the tuple with LCA at level `i` has weight
//! `(1/d) * k^-i * k^-(d-i-1)k`.

use crate::csp::{opt_given_order_capped, Instance, Solution};
use crate::pattern::{parse_slot, PayoffFunction};
use crate::tree::{build_perfect, NodeId, Tree};
use crate::{invalid, Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Leaf-count cap for gap instances.
pub const GAP_LEAF_CAP: usize = 81;
/// Constraint-count cap for gap instances.
pub const GAP_CONSTRAINT_CAP: usize = 1_000_000;
/// Cap on the coupled-map target domain size.
pub const COUPLED_TARGET_CAP: usize = 1 << 20;
/// Exact order experiments need opt-given-order on every variable.
pub const ORDER_EXPERIMENT_CAP: usize = 13;

/// Template for a gap instance: a payoff plus the tree depth.
#[derive(Debug, Clone)]
pub struct GapSpec {
    payoff: PayoffFunction,
    d: usize,
}

impl GapSpec {
    pub fn new(payoff: PayoffFunction, d: usize) -> Result<GapSpec> {
        let k = payoff.arity();
        if k < 2 {
            return invalid("gap payoff arity must be at least 2");
        }
        if d < 1 {
            return invalid("gap depth must be at least 1");
        }
        let m = k.checked_pow(d as u32).unwrap_or(usize::MAX);
        if m > GAP_LEAF_CAP {
            return Err(Error::Resource {
                what: "gap leaf count k^d".into(),
                got: m as u64,
                cap: GAP_LEAF_CAP as u64,
            });
        }
        Ok(GapSpec { payoff, d })
    }

    pub fn payoff(&self) -> &PayoffFunction {
        &self.payoff
    }

    pub fn k(&self) -> usize {
        self.payoff.arity()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of variables, `k^d`.
    pub fn m(&self) -> usize {
        self.k().pow(self.d as u32)
    }

    /// The perfect k-ary base tree with leaves labeled `1..=m`.
    pub fn base_tree(&self) -> Tree {
        build_perfect(self.k(), self.d).expect("validated arity")
    }

    /// Variable names, matching the base-tree leaf labels.
    pub fn var_names(&self) -> Vec<String> {
        (1..=self.m()).map(|i| i.to_string()).collect()
    }
}

/// True iff the leaves sit in distinct child subtrees of their LCA in
/// left-to-right slot order: leaf `i` under the `i`-th child.
pub fn cousins(tree: &Tree, leaves: &[NodeId]) -> Result<bool> {
    if leaves.is_empty() {
        return invalid("cousins of empty tuple");
    }
    let mut sorted = leaves.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != leaves.len() {
        return invalid("cousins tuple must be distinct");
    }
    let u = tree.lca(leaves)?;
    if tree.children(u).len() != leaves.len() {
        return Ok(false);
    }
    for (i, &leaf) in leaves.iter().enumerate() {
        match tree.child_index_towards(u, leaf) {
            Some(ix) if ix == i => {}
            _ => return Ok(false),
        }
    }
    Ok(true)
}

fn leaf_index(spec: &GapSpec, name: &str) -> Result<usize> {
    let i: usize = name
        .parse()
        .map_err(|_| Error::NotFound(format!("leaf {name} not in the base tree")))?;
    if i < 1 || i > spec.m() {
        return Err(Error::NotFound(format!("leaf {name} not in the base tree")));
    }
    Ok(i - 1)
}

fn digits_base_k(mut x: usize, k: usize, d: usize) -> Vec<usize> {
    let mut out = vec![0; d];
    for slot in (0..d).rev() {
        out[slot] = x % k;
        x /= k;
    }
    out
}

/// Probability that the level-sampling map emits exactly this tuple:
/// `(1/d) k^-i k^-(d-i-1)k` for cousins with LCA at level `i`, else 0.
pub fn lkm_weight(spec: &GapSpec, vars: &[&str]) -> Result<BigRational> {
    let k = spec.k();
    let d = spec.d();
    if vars.len() != k {
        return invalid(format!("tuple must have arity {k}"));
    }
    let idx: Vec<usize> = vars
        .iter()
        .map(|v| leaf_index(spec, v))
        .collect::<Result<_>>()?;
    let digit_rows: Vec<Vec<usize>> = idx.iter().map(|&i| digits_base_k(i, k, d)).collect();
    // locate the split level: the longest common prefix
    let mut level = 0;
    while level < d && (1..k).all(|t| digit_rows[t][level] == digit_rows[0][level]) {
        level += 1;
    }
    if level >= d {
        return Ok(BigRational::zero()); // identical leaves, unreachable for distinct input
    }
    let is_cousins = (0..k).all(|t| digit_rows[t][level] == t)
        && (1..k).all(|t| digit_rows[t][..level] == digit_rows[0][..level]);
    if !is_cousins {
        return Ok(BigRational::zero());
    }
    let denom = BigInt::from(d)
        * BigInt::from(k).pow(level as u32)
        * BigInt::from(k).pow(((d - level - 1) * k) as u32);
    Ok(BigRational::new(BigInt::one(), denom))
}

/// Materializes the gap instance: one constraint per cousins tuple, weights
/// from [`lkm_weight`], summing to 1 exactly.
pub fn build_gap(spec: &GapSpec) -> Result<Instance> {
    let k = spec.k();
    let d = spec.d();
    let total: usize = (0..d)
        .map(|i| k.pow(i as u32) * k.pow(((d - i - 1) * k) as u32))
        .sum();
    if total > GAP_CONSTRAINT_CAP {
        return Err(Error::Resource {
            what: "gap constraint count".into(),
            got: total as u64,
            cap: GAP_CONSTRAINT_CAP as u64,
        });
    }
    let vars = spec.var_names();
    let mut inst = Instance::new(vars.clone())?;
    inst.add_payoff(spec.payoff.clone());
    for level in 0..d {
        let weight = BigRational::new(
            BigInt::one(),
            BigInt::from(d)
                * BigInt::from(k).pow(level as u32)
                * BigInt::from(k).pow(((d - level - 1) * k) as u32),
        );
        let block = k.pow((d - level) as u32); // leaves under a level node
        let sub = block / k; // leaves under each child
        for node in 0..k.pow(level as u32) {
            let base = node * block;
            // cross product of one leaf per child subtree
            let mut picks = vec![0usize; k];
            'tuples: loop {
                let names: Vec<&str> = (0..k)
                    .map(|j| vars[base + j * sub + picks[j]].as_str())
                    .collect();
                inst.add_constraint(spec.payoff.name(), &names, weight.clone())?;
                let mut slot = k - 1;
                loop {
                    picks[slot] += 1;
                    if picks[slot] < sub {
                        break;
                    }
                    picks[slot] = 0;
                    if slot == 0 {
                        break 'tuples;
                    }
                    slot -= 1;
                }
            }
        }
    }
    debug_assert!(inst.total_weight().is_one());
    Ok(inst)
}

/// The pattern-substitution solution: every internal node of the base tree
/// is replaced by a payoff-1 pattern whose i-th leaf position carries the
/// child matching the pattern's slot there. Scores exactly 1 on the gap
/// instance.
pub fn satisfying_solution(spec: &GapSpec) -> Result<Solution> {
    if !spec.payoff.is_satisfiable() {
        return invalid(format!(
            "payoff {} has no payoff-1 pattern",
            spec.payoff.name()
        ));
    }
    let pattern = spec.payoff.satisfying_pattern().expect("satisfiable");
    let base = spec.base_tree();
    fn place(base: &Tree, v: NodeId, ptree: &Tree, pv: NodeId) -> Tree {
        if ptree.is_leaf(pv) {
            let slot = parse_slot(ptree.label(pv).expect("pattern leaves labeled"))
                .expect("pattern labels are slots");
            let child = base.children(v)[slot - 1];
            return transform(base, child, ptree);
        }
        Tree::node(
            ptree
                .children(pv)
                .iter()
                .map(|&pc| place(base, v, ptree, pc))
                .collect(),
        )
    }
    fn transform(base: &Tree, v: NodeId, ptree: &Tree) -> Tree {
        if base.is_leaf(v) {
            return Tree::leaf(base.label(v).expect("labeled leaf"));
        }
        place(base, v, ptree, ptree.root())
    }
    let tree = transform(&base, base.root(), pattern.tree());
    Solution::from_leaf_labels(&tree)
}

/// How to draw orders for [`order_experiment`].
#[derive(Debug, Clone, Copy)]
pub enum OrderSample {
    /// All m! orders (m <= 8).
    All,
    /// This many uniform random orders.
    Random(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderExperimentReport {
    pub mean: f64,
    pub stderr: f64,
    pub values: Vec<f64>,
    pub exhaustive: bool,
}

/// Distribution of opt(I | pi) over leaf orders of the gap instance.
pub fn order_experiment(
    spec: &GapSpec,
    sample: OrderSample,
    seed: u64,
) -> Result<OrderExperimentReport> {
    let m = spec.m();
    if m > ORDER_EXPERIMENT_CAP {
        return Err(Error::Resource {
            what: "order experiment variable count".into(),
            got: m as u64,
            cap: ORDER_EXPERIMENT_CAP as u64,
        });
    }
    let inst = build_gap(spec)?;
    let vars = inst.vars().to_vec();
    let orders: Vec<Vec<String>> = match sample {
        OrderSample::All => {
            if m > 8 {
                return Err(Error::Resource {
                    what: "exhaustive order count m!".into(),
                    got: m as u64,
                    cap: 8,
                });
            }
            crate::pattern::permutations(m)
                .into_iter()
                .map(|p| p.iter().map(|&i| vars[i].clone()).collect())
                .collect()
        }
        OrderSample::Random(n) => {
            if n == 0 {
                return invalid("need at least one order");
            }
            (0..n)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    let mut order = vars.clone();
                    order.shuffle(&mut rng);
                    order
                })
                .collect()
        }
    };
    let values: Vec<f64> = orders
        .par_iter()
        .map(|order| {
            opt_given_order_capped(&inst, order, ORDER_EXPERIMENT_CAP)
                .map(|(v, _)| v)
                .expect("within caps")
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let exhaustive = matches!(sample, OrderSample::All);
    let stderr = if exhaustive || values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok(OrderExperimentReport {
        mean,
        stderr,
        values,
        exhaustive,
    })
}

/// Exact mean absolute drift of per-label leaf fractions from a node to its
/// children, under the level-then-node sampling law: pick a uniform leaf u
/// and uniform level t < d, take the ancestor u(t), and average
/// `(1/k) sum_children sum_labels |mu_i(child) - mu_i(u(t))|`.
pub fn child_label_divergence(tree: &Tree, labels: &[usize]) -> Result<f64> {
    let leaves = tree.leaves();
    if labels.len() != leaves.len() {
        return invalid("one label per leaf required");
    }
    if leaves.len() == 1 {
        return Ok(0.0);
    }
    let root = tree.root();
    let k = tree.children(root).len();
    let d = tree.depth(leaves[0]);
    for &l in &leaves {
        if tree.depth(l) != d {
            return invalid("tree must be perfect: all leaves at equal depth");
        }
    }
    for v in 0..tree.node_count() {
        if !tree.is_leaf(v) && tree.children(v).len() != k {
            return invalid("tree must be perfect k-ary");
        }
    }
    let q = labels.iter().max().copied().unwrap_or(0) + 1;
    let leaf_pos: BTreeMap<NodeId, usize> =
        leaves.iter().enumerate().map(|(i, &l)| (l, i)).collect();

    struct Acc<'a> {
        tree: &'a Tree,
        labels: &'a [usize],
        leaf_pos: &'a BTreeMap<NodeId, usize>,
        q: usize,
        k: usize,
        d: usize,
        total: BigRational,
    }
    fn counts(acc: &mut Acc, v: NodeId, depth: usize) -> (u64, Vec<u64>) {
        if acc.tree.is_leaf(v) {
            let mut c = vec![0u64; acc.q];
            c[acc.labels[acc.leaf_pos[&v]]] = 1;
            return (1, c);
        }
        let kids: Vec<NodeId> = acc.tree.children(v).to_vec();
        let kid_stats: Vec<(u64, Vec<u64>)> = kids
            .into_iter()
            .map(|c| counts(acc, c, depth + 1))
            .collect();
        let n: u64 = kid_stats.iter().map(|(n, _)| n).sum();
        let mut total = vec![0u64; acc.q];
        for (_, c) in &kid_stats {
            for (t, &x) in c.iter().enumerate() {
                total[t] += x;
            }
        }
        // weight of this node under the sampling law: (1/d) * k^-depth
        let node_weight = BigRational::new(
            BigInt::one(),
            BigInt::from(acc.d) * BigInt::from(acc.k).pow(depth as u32),
        );
        let mut drift = BigRational::zero();
        for (ny, cy) in &kid_stats {
            for t in 0..acc.q {
                let mu_child = BigRational::new(BigInt::from(cy[t]), BigInt::from(*ny));
                let mu_node = BigRational::new(BigInt::from(total[t]), BigInt::from(n));
                let diff = mu_child - mu_node;
                drift += diff.abs();
            }
        }
        let share = BigRational::new(BigInt::one(), BigInt::from(acc.k));
        acc.total += node_weight * share * drift;
        (n, total)
    }
    let mut acc = Acc {
        tree,
        labels,
        leaf_pos: &leaf_pos,
        q,
        k,
        d,
        total: BigRational::zero(),
    };
    counts(&mut acc, root, 0);
    Ok(acc.total.to_f64().expect("small rational"))
}

/// Upper bound sqrt(2 log2 q / d) for the divergence.
pub fn divergence_bound(q: usize, d: usize) -> f64 {
    if q <= 1 {
        return 0.0;
    }
    (2.0 * (q as f64).log2() / d as f64).sqrt()
}

/// Exact law of the shortcut-tree map for source `j`: the chance of leaf
/// `v` is `(M/N) * B(v,j)/d'` where `B(v,j)` counts how often the root path
/// of `v` takes the j-th branch.
pub fn lmn_pmf(m_size: usize, dprime: usize, j: usize) -> Result<Vec<BigRational>> {
    if m_size < 2 || dprime < 1 {
        return invalid("need M >= 2 and d' >= 1");
    }
    if j >= m_size {
        return invalid(format!("source index {j} out of range"));
    }
    let n = m_size
        .checked_pow(dprime as u32)
        .filter(|&n| n <= COUPLED_TARGET_CAP)
        .ok_or(Error::Resource {
            what: "coupled map target size M^d'".into(),
            got: u64::MAX,
            cap: COUPLED_TARGET_CAP as u64,
        })?;
    let mut pmf = Vec::with_capacity(n);
    for v in 0..n {
        let mut branches = 0u32;
        let mut x = v;
        for _ in 0..dprime {
            if x % m_size == j {
                branches += 1;
            }
            x /= m_size;
        }
        pmf.push(BigRational::new(
            BigInt::from(m_size) * BigInt::from(branches),
            BigInt::from(n) * BigInt::from(dprime),
        ));
    }
    Ok(pmf)
}

/// A coupling of two PMFs over the same domain.
#[derive(Debug, Clone)]
pub struct Coupling {
    /// Sparse joint mass: (x, y, mass).
    pub entries: Vec<(usize, usize, f64)>,
    /// Off-diagonal mass, equal to the total variation distance.
    pub tv: f64,
    pub len: usize,
}

impl Coupling {
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; self.len];
        let mut q = vec![0.0; self.len];
        for &(x, y, m) in &self.entries {
            p[x] += m;
            q[y] += m;
        }
        (p, q)
    }

    pub fn off_diagonal_mass(&self) -> f64 {
        self.entries
            .iter()
            .filter(|(x, y, _)| x != y)
            .map(|(_, _, m)| m)
            .sum()
    }
}

/// Optimal coupling: diagonal mass `min(p_i, q_i)` per element, remaining
/// surpluses matched greedily in ascending index order. The off-diagonal
/// mass equals `TV(p, q)`.
pub fn optimal_coupling(p: &[f64], q: &[f64]) -> Result<Coupling> {
    if p.len() != q.len() || p.is_empty() {
        return invalid("coupling inputs must be equal-length and nonempty");
    }
    for &x in p.iter().chain(q) {
        if !(0.0..=1.0 + 1e-12).contains(&x) {
            return invalid("PMF entries must lie in [0,1]");
        }
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if (sp - 1.0).abs() > 1e-9 || (sq - 1.0).abs() > 1e-9 {
        return invalid(format!("PMFs must sum to 1, got {sp} and {sq}"));
    }
    let mut entries = Vec::new();
    let mut tv = 0.0;
    let mut surplus_p: Vec<(usize, f64)> = Vec::new();
    let mut surplus_q: Vec<(usize, f64)> = Vec::new();
    for i in 0..p.len() {
        let diag = p[i].min(q[i]);
        if diag > 0.0 {
            entries.push((i, i, diag));
        }
        if p[i] > q[i] {
            surplus_p.push((i, p[i] - q[i]));
            tv += p[i] - q[i];
        } else if q[i] > p[i] {
            surplus_q.push((i, q[i] - p[i]));
        }
    }
    let (mut a, mut b) = (0, 0);
    while a < surplus_p.len() && b < surplus_q.len() {
        let take = surplus_p[a].1.min(surplus_q[b].1);
        if take > 0.0 {
            entries.push((surplus_p[a].0, surplus_q[b].0, take));
        }
        surplus_p[a].1 -= take;
        surplus_q[b].1 -= take;
        if surplus_p[a].1 <= 1e-15 {
            a += 1;
        }
        if surplus_q[b].1 <= 1e-15 {
            b += 1;
        }
    }
    Ok(Coupling {
        entries,
        tv,
        len: p.len(),
    })
}

/// Precomputed coupled random map: every source's image is exactly uniform
/// over `[N]`, coupled to the shortcut-tree map so they disagree with
/// probability `TV(pmf_source, uniform)`.
#[derive(Debug, Clone)]
pub struct CoupledMapSpec {
    pub m: usize,
    pub dprime: usize,
    pub n: usize,
    /// Exact per-source PMF of the shortcut-tree map over [N].
    pub pmfs: Vec<Vec<f64>>,
    /// Exact per-source total variation to uniform.
    pub tv: Vec<f64>,
    /// Conditional sampling rows: per source, per x, cumulative (y, cdf).
    rows: Vec<BTreeMap<usize, Vec<(usize, f64)>>>,
    /// Max deviation of the coupled marginals from exact uniformity.
    pub marginal_error: f64,
    /// Smoothing rate: with this probability a sample returns a completely
    /// random map instead of the coupled one, making every image value
    /// reachable. Zero by default.
    pub eta: f64,
}

impl CoupledMapSpec {
    pub fn new(m: usize, dprime: usize) -> Result<CoupledMapSpec> {
        CoupledMapSpec::with_smoothing(m, dprime, 0.0)
    }

    pub fn with_smoothing(m: usize, dprime: usize, eta: f64) -> Result<CoupledMapSpec> {
        if !(0.0..=1.0).contains(&eta) {
            return invalid("smoothing rate must lie in [0,1]");
        }
        let mut pmfs = Vec::with_capacity(m);
        let mut tv = Vec::with_capacity(m);
        let mut rows = Vec::with_capacity(m);
        let mut marginal_error: f64 = 0.0;
        let mut n = 0;
        for j in 0..m {
            let pmf_exact = lmn_pmf(m, dprime, j)?;
            n = pmf_exact.len();
            let uniform = vec![1.0 / n as f64; n];
            let pmf: Vec<f64> = pmf_exact
                .iter()
                .map(|r| r.to_f64().expect("small rational"))
                .collect();
            // exact TV to uniform
            let u = BigRational::new(BigInt::one(), BigInt::from(n));
            let tv_exact: BigRational = pmf_exact
                .iter()
                .map(|r| (r - &u).abs())
                .sum::<BigRational>()
                / BigRational::from_integer(2.into());
            tv.push(tv_exact.to_f64().expect("small rational"));
            let coupling = optimal_coupling(&pmf, &uniform)?;
            let (_, qm) = coupling.marginals();
            for (i, &mass) in qm.iter().enumerate() {
                marginal_error = marginal_error.max((mass - uniform[i]).abs());
            }
            let mut row: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
            for &(x, y, mass) in &coupling.entries {
                row.entry(x).or_default().push((y, mass));
            }
            for (&x, targets) in row.iter_mut() {
                let px = pmf[x];
                debug_assert!(px > 0.0);
                let mut acc = 0.0;
                for t in targets.iter_mut() {
                    acc += t.1 / px;
                    t.1 = acc;
                }
            }
            rows.push(row);
            pmfs.push(pmf);
        }
        Ok(CoupledMapSpec {
            m,
            dprime,
            n,
            pmfs,
            tv,
            rows,
            marginal_error,
            eta,
        })
    }

    pub fn tv_max(&self) -> f64 {
        self.tv.iter().cloned().fold(0.0, f64::max)
    }

    /// One realization: the shortcut-tree map plus its coupled uniform copy.
    /// With probability `eta` the coupled side is replaced by a completely
    /// random map.
    pub fn sample(&self, rng: &mut impl Rng) -> CoupledSample {
        let t = rng.gen_range(0..self.dprime);
        let node = rng.gen_range(0..self.m.pow(t as u32));
        let block = self.n / self.m.pow(t as u32);
        let sub = block / self.m;
        let mut lmn = Vec::with_capacity(self.m);
        let mut coupled = Vec::with_capacity(self.m);
        let smoothed = self.eta > 0.0 && rng.gen::<f64>() < self.eta;
        for j in 0..self.m {
            let x = node * block + j * sub + rng.gen_range(0..sub);
            lmn.push(x);
            if smoothed {
                coupled.push(rng.gen_range(0..self.n));
                continue;
            }
            let row = &self.rows[j][&x];
            let u: f64 = rng.gen();
            let y = row
                .iter()
                .find(|(_, cdf)| u < *cdf)
                .map(|&(y, _)| y)
                .unwrap_or(row.last().expect("nonempty row").0);
            coupled.push(y);
        }
        CoupledSample { lmn, coupled }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledSample {
    /// Images under the shortcut-tree map.
    pub lmn: Vec<usize>,
    /// Images under the uniform-marginal coupled map.
    pub coupled: Vec<usize>,
}

/// Cousins test in a perfect `k`-ary tree over `k^depth` leaves addressed
/// by index.
pub fn cousins_by_index(k: usize, depth: usize, tuple: &[usize]) -> bool {
    if tuple.len() != k {
        return false;
    }
    let rows: Vec<Vec<usize>> = tuple.iter().map(|&x| digits_base_k(x, k, depth)).collect();
    let mut level = 0;
    while level < depth && (1..k).all(|t| rows[t][level] == rows[0][level]) {
        level += 1;
    }
    if level >= depth {
        return false;
    }
    (0..k).all(|t| rows[t][level] == t) && (1..k).all(|t| rows[t][..level] == rows[0][..level])
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub m: usize,
    pub dprime: usize,
    pub n: usize,
    pub k: usize,
    pub trials: u64,
    pub tv_per_source: Vec<f64>,
    pub tv_max: f64,
    pub marginal_error: f64,
    /// Empirical rate at which coupled images of cousins remain cousins.
    pub cousin_preservation: f64,
    /// The guaranteed floor 1 - k * tv_max.
    pub preservation_bound: f64,
    pub chi2_statistic: f64,
    pub chi2_critical_p001: f64,
    pub chi2_pass: bool,
}

/// Chi-squared critical value via the Wilson-Hilferty approximation.
pub fn chi2_critical(df: usize, z: f64) -> f64 {
    let d = df as f64;
    let t = 1.0 - 2.0 / (9.0 * d) + z * (2.0 / (9.0 * d)).sqrt();
    d * t * t * t
}

/// Samples the coupled map, checking the uniform marginal of source 0 by a
/// chi-squared test and measuring cousin preservation on random cousin
/// tuples of the k-ary source tree.
pub fn coupling_experiment(
    m: usize,
    dprime: usize,
    k: usize,
    trials: u64,
    seed: u64,
) -> Result<CouplingReport> {
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    // depth of the k-ary source tree
    let mut d_m = 0;
    let mut acc = 1;
    while acc < m {
        acc *= k;
        d_m += 1;
    }
    if acc != m || k < 2 {
        return invalid(format!("M = {m} is not a power of k = {k}"));
    }
    let spec = CoupledMapSpec::new(m, dprime)?;
    let d_n = d_m * dprime;
    let results: Vec<(usize, u64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let sample = spec.sample(&mut rng);
            // random cousins tuple in the k-ary source tree
            let level = rng.gen_range(0..d_m);
            let prefix = rng.gen_range(0..k.pow(level as u32));
            let below = k.pow((d_m - level - 1) as u32);
            let tuple: Vec<usize> = (0..k)
                .map(|i| (prefix * k + i) * below + rng.gen_range(0..below))
                .collect();
            debug_assert!(cousins_by_index(k, d_m, &tuple));
            let images: Vec<usize> = tuple.iter().map(|&u| sample.coupled[u]).collect();
            let preserved = cousins_by_index(k, d_n, &images) as u64;
            (sample.coupled[0], preserved)
        })
        .collect();
    let mut counts = vec![0u64; spec.n];
    let mut preserved = 0u64;
    for (hit, p) in results {
        counts[hit] += 1;
        preserved += p;
    }
    let expected = trials as f64 / spec.n as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected) * (c as f64 - expected) / expected)
        .sum();
    let crit = chi2_critical(spec.n - 1, 3.090232); // p = 0.001
    Ok(CouplingReport {
        m,
        dprime,
        n: spec.n,
        k,
        trials,
        tv_per_source: spec.tv.clone(),
        tv_max: spec.tv_max(),
        marginal_error: spec.marginal_error,
        cousin_preservation: preserved as f64 / trials as f64,
        preservation_bound: 1.0 - k as f64 * spec.tv_max(),
        chi2_statistic: chi2,
        chi2_critical_p001: crit,
        chi2_pass: chi2 < crit,
    })
}
