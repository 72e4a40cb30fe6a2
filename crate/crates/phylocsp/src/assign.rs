//! Biased random assignment and approximation thresholds.
//!
//! A biased random assignment is specified by a constant-size full binary
//! skeleton tree and a probability distribution on its leaves: every
//! variable independently lands on a skeleton leaf, and variables sharing a
//! leaf are split recursively by fair coins until they separate. The
//! expected payoff of a constraint under this process depends only on the
//! skeleton, the leaf distribution, and the payoff table.
//!
//! `alpha_exact` computes that expectation exactly. Since constraint
//! variables are i.i.d., every labeling of a realized shape is equally
//! likely, so it suffices to track the distribution over *shapes*: a tree
//! DP over the skeleton combines binomial splits with the fair-splitting
//! law inside one leaf.

use crate::csp::Solution;
use crate::pattern::{permutations, Pattern, PayoffFunction};
use crate::tree::{build_caterpillar, NodeId, Side, Tree};
use crate::{invalid, Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Skeleton trees above this leaf count are rejected.
pub const SKELETON_LEAF_CAP: usize = 4096;
/// Largest payoff arity handled by the exact computations.
pub const ALPHA_ARITY_CAP: usize = 6;

/// A constant-size full binary skeleton plus a leaf distribution.
#[derive(Debug, Clone)]
pub struct BiasedMeasure {
    skeleton: Tree,
    leaf_probs: Vec<f64>,
}

impl BiasedMeasure {
    pub fn new(skeleton: Tree, leaf_probs: Vec<f64>) -> Result<BiasedMeasure> {
        skeleton.validate()?;
        if !skeleton.is_full_binary() {
            return invalid("skeleton must be full binary");
        }
        let leaves = skeleton.leaf_count();
        if leaves > SKELETON_LEAF_CAP {
            return Err(Error::Resource {
                what: "skeleton leaf count".into(),
                got: leaves as u64,
                cap: SKELETON_LEAF_CAP as u64,
            });
        }
        if leaf_probs.len() != leaves {
            return invalid("one probability per skeleton leaf required");
        }
        if leaf_probs.iter().any(|&p| p < 0.0) {
            return invalid("leaf probabilities must be nonnegative");
        }
        let sum: f64 = leaf_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return invalid(format!("leaf probabilities sum to {sum}, expected 1"));
        }
        Ok(BiasedMeasure {
            skeleton,
            leaf_probs,
        })
    }

    /// The degenerate measure: a single skeleton leaf, i.e. plain uniform
    /// recursive splitting.
    pub fn uniform_splitting() -> BiasedMeasure {
        BiasedMeasure {
            skeleton: Tree::leaf("1"),
            leaf_probs: vec![1.0],
        }
    }

    /// Left caterpillar of the given depth with the geometric leaf profile
    /// of the process that sends each variable right with probability
    /// `delta` at every level: reading leaves left to right,
    /// ((1-d)^depth, (1-d)^(depth-1) d, ..., (1-d) d, d).
    pub fn caterpillar_bias(delta: f64, depth: usize) -> Result<BiasedMeasure> {
        if !(delta > 0.0 && delta < 1.0) {
            return invalid("delta must be in (0,1)");
        }
        if depth == 0 {
            return Ok(BiasedMeasure::uniform_splitting());
        }
        let skeleton = build_caterpillar(depth + 1, Side::Left)?;
        let mut probs = Vec::with_capacity(depth + 1);
        probs.push((1.0 - delta).powi(depth as i32));
        for t in (1..=depth).rev() {
            probs.push((1.0 - delta).powi((t - 1) as i32) * delta);
        }
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        BiasedMeasure::new(skeleton, probs)
    }

    /// Left caterpillar with the uniform leaf distribution.
    pub fn uniform_caterpillar(depth: usize) -> Result<BiasedMeasure> {
        if depth == 0 {
            return Ok(BiasedMeasure::uniform_splitting());
        }
        let skeleton = build_caterpillar(depth + 1, Side::Left)?;
        let probs = vec![1.0 / (depth + 1) as f64; depth + 1];
        BiasedMeasure::new(skeleton, probs)
    }

    /// Mirror image (children swapped everywhere, leaf profile reversed).
    pub fn mirrored(&self) -> BiasedMeasure {
        fn flip(t: &Tree, v: NodeId) -> Tree {
            if t.is_leaf(v) {
                match t.label(v) {
                    Some(l) => Tree::leaf(l),
                    None => Tree::unlabeled_leaf(),
                }
            } else {
                let mut kids: Vec<Tree> = t.children(v).iter().map(|&c| flip(t, c)).collect();
                kids.reverse();
                Tree::node(kids)
            }
        }
        let skeleton = if self.skeleton.leaf_count() == 1 {
            self.skeleton.clone()
        } else {
            flip(&self.skeleton, self.skeleton.root())
        };
        let mut probs = self.leaf_probs.clone();
        probs.reverse();
        BiasedMeasure {
            skeleton,
            leaf_probs: probs,
        }
    }

    pub fn skeleton(&self) -> &Tree {
        &self.skeleton
    }

    pub fn leaf_probs(&self) -> &[f64] {
        &self.leaf_probs
    }
}

/// Samples a full binary solution: each variable lands on a skeleton leaf
/// by the leaf distribution, and within a leaf the group is split by fair
/// coins, redrawing any split that leaves one side empty (such splits do
/// not change the realized tree).
pub fn sample_solution(
    measure: &BiasedMeasure,
    vars: &[String],
    rng: &mut impl Rng,
) -> Result<Solution> {
    if vars.is_empty() {
        return invalid("need at least one variable");
    }
    let leaves = measure.skeleton.leaves();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); leaves.len()];
    let cdf: Vec<f64> = measure
        .leaf_probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    for (vi, _) in vars.iter().enumerate() {
        let u: f64 = rng.gen();
        let li = cdf.iter().position(|&c| u < c).unwrap_or(leaves.len() - 1);
        groups[li].push(vi);
    }
    let built: Vec<Option<Tree>> = groups
        .iter()
        .map(|g| {
            if g.is_empty() {
                None
            } else {
                Some(split_group(g, vars, rng))
            }
        })
        .collect();
    let by_leaf: BTreeMap<NodeId, usize> =
        leaves.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    fn assemble(
        skel: &Tree,
        v: NodeId,
        by_leaf: &BTreeMap<NodeId, usize>,
        built: &[Option<Tree>],
    ) -> Option<Tree> {
        if skel.is_leaf(v) {
            return built[by_leaf[&v]].clone();
        }
        let mut parts: Vec<Tree> = skel
            .children(v)
            .iter()
            .filter_map(|&c| assemble(skel, c, by_leaf, built))
            .collect();
        match parts.len() {
            0 => None,
            1 => parts.pop(),
            _ => Some(Tree::node(parts)),
        }
    }
    let tree = assemble(&measure.skeleton, measure.skeleton.root(), &by_leaf, &built)
        .expect("at least one variable was placed");
    Solution::from_leaf_labels(&tree)
}

fn split_group(group: &[usize], vars: &[String], rng: &mut impl Rng) -> Tree {
    if group.len() == 1 {
        return Tree::leaf(vars[group[0]].clone());
    }
    loop {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &v in group {
            if rng.gen::<bool>() {
                left.push(v);
            } else {
                right.push(v);
            }
        }
        if !left.is_empty() && !right.is_empty() {
            return Tree::binary(
                split_group(&left, vars, rng),
                split_group(&right, vars, rng),
            );
        }
    }
}

/// Exact law of the pattern matched by `k` tracked items under fair
/// recursive splitting: each ordered binary pattern has probability
/// `prod over internal nodes u of 1/(2^{j_u}-2)` where `j_u` counts the
/// leaves below `u` (splits that move all tracked items to one side are
/// absorbed, so each stage conditions on a nontrivial bipartition).
pub fn uniform_split_pattern_dist(k: usize) -> Result<Vec<(Pattern, BigRational)>> {
    if k < 1 {
        return invalid("k must be at least 1");
    }
    if k > ALPHA_ARITY_CAP {
        return Err(Error::Resource {
            what: "pattern distribution arity".into(),
            got: k as u64,
            cap: ALPHA_ARITY_CAP as u64,
        });
    }
    let patterns = crate::pattern::enumerate_patterns(k, 2)?;
    Ok(patterns
        .into_iter()
        .map(|p| {
            let mut prob = BigRational::one();
            for v in 0..p.tree().node_count() {
                if !p.tree().is_leaf(v) {
                    let j = subtree_leaves(p.tree(), v);
                    let denom = BigInt::from((1u64 << j) - 2);
                    prob *= BigRational::new(BigInt::one(), denom);
                }
            }
            (p, prob)
        })
        .collect())
}

fn subtree_leaves(t: &Tree, v: NodeId) -> usize {
    if t.is_leaf(v) {
        1
    } else {
        t.children(v).iter().map(|&c| subtree_leaves(t, c)).sum()
    }
}

/// Catalog of ordered full binary shapes on 1..=k leaves, indexed for the
/// threshold DP.
pub struct ShapeCatalog {
    k: usize,
    /// defs[j][id] = None for the single 1-leaf shape, else (a, left id at a
    /// leaves, right id at j-a leaves).
    defs: Vec<Vec<Option<(usize, usize, usize)>>>,
    index: Vec<BTreeMap<(usize, usize, usize), usize>>,
    /// Shape law under pure fair splitting, per leaf count.
    uniform_law: Vec<Vec<f64>>,
    binomial: Vec<Vec<f64>>,
}

impl ShapeCatalog {
    pub fn new(k: usize) -> Result<ShapeCatalog> {
        if !(1..=ALPHA_ARITY_CAP).contains(&k) {
            return Err(Error::Resource {
                what: "alpha arity".into(),
                got: k as u64,
                cap: ALPHA_ARITY_CAP as u64,
            });
        }
        let mut defs: Vec<Vec<Option<(usize, usize, usize)>>> = vec![Vec::new(); k + 1];
        let mut index: Vec<BTreeMap<(usize, usize, usize), usize>> = vec![BTreeMap::new(); k + 1];
        defs[1].push(None);
        for j in 2..=k {
            for a in 1..j {
                for l in 0..defs[a].len() {
                    for r in 0..defs[j - a].len() {
                        let id = defs[j].len();
                        defs[j].push(Some((a, l, r)));
                        index[j].insert((a, l, r), id);
                    }
                }
            }
        }
        let mut binomial = vec![vec![0.0; k + 1]; k + 1];
        for n in 0..=k {
            binomial[n][0] = 1.0;
            for r in 1..=n {
                binomial[n][r] =
                    binomial[n - 1][r - 1] + if r < n { binomial[n - 1][r] } else { 0.0 };
            }
        }
        let mut uniform_law: Vec<Vec<f64>> = vec![Vec::new(); k + 1];
        uniform_law[1] = vec![1.0];
        for j in 2..=k {
            let mut law = vec![0.0; defs[j].len()];
            for (id, def) in defs[j].iter().enumerate() {
                let (a, l, r) = def.unwrap();
                let stage = binomial[j][a] / ((1u64 << j) as f64 - 2.0);
                law[id] = stage * uniform_law[a][l] * uniform_law[j - a][r];
            }
            uniform_law[j] = law;
        }
        Ok(ShapeCatalog {
            k,
            defs,
            index,
            uniform_law,
            binomial,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn shape_count(&self, j: usize) -> usize {
        self.defs[j].len()
    }

    /// Rebuilds the unlabeled tree of a shape id.
    pub fn shape_tree(&self, j: usize, id: usize) -> Tree {
        match self.defs[j][id] {
            None => Tree::unlabeled_leaf(),
            Some((a, l, r)) => Tree::binary(self.shape_tree(a, l), self.shape_tree(j - a, r)),
        }
    }

    /// Mean payoff over the k! slot labelings of each k-leaf shape.
    pub fn average_payoffs(&self, f: &PayoffFunction) -> Result<Vec<f64>> {
        if f.arity() != self.k {
            return invalid("payoff arity does not match catalog");
        }
        let k = self.k;
        let perms = permutations(k);
        let mut out = Vec::with_capacity(self.defs[k].len());
        for id in 0..self.defs[k].len() {
            let shape = self.shape_tree(k, id);
            let mut sum = 0.0;
            for perm in &perms {
                let slots: Vec<usize> = perm.iter().map(|&i| i + 1).collect();
                let p = Pattern::from_shape(&shape, &slots)?;
                sum += f.payoff_of_pattern(&p);
            }
            out.push(sum / perms.len() as f64);
        }
        Ok(out)
    }

    /// Distribution over realized shapes for 1..=k i.i.d. items under the
    /// measure: dist[j][shape id] at the skeleton root.
    pub fn shape_dist(&self, measure: &BiasedMeasure) -> Vec<Vec<f64>> {
        let skel = measure.skeleton();
        let leaves = skel.leaves();
        let leaf_ix: BTreeMap<NodeId, usize> =
            leaves.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut mass = vec![0.0; skel.node_count()];
        fn mass_rec(
            t: &Tree,
            v: NodeId,
            probs: &[f64],
            ix: &BTreeMap<NodeId, usize>,
            mass: &mut [f64],
        ) -> f64 {
            let m = if t.is_leaf(v) {
                probs[ix[&v]]
            } else {
                t.children(v)
                    .iter()
                    .map(|&c| mass_rec(t, c, probs, ix, mass))
                    .sum()
            };
            mass[v] = m;
            m
        }
        mass_rec(skel, skel.root(), measure.leaf_probs(), &leaf_ix, &mut mass);
        self.dist_rec(skel, skel.root(), &mass)
    }

    fn dist_rec(&self, skel: &Tree, v: NodeId, mass: &[f64]) -> Vec<Vec<f64>> {
        if skel.is_leaf(v) {
            return self.uniform_law[..=self.k].to_vec();
        }
        let kids = skel.children(v);
        debug_assert_eq!(kids.len(), 2);
        let dl = self.dist_rec(skel, kids[0], mass);
        let dr = self.dist_rec(skel, kids[1], mass);
        let total = mass[v];
        let p = if total > 0.0 {
            mass[kids[0]] / total
        } else {
            0.5
        };
        let q = 1.0 - p;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.k + 1);
        out.push(Vec::new());
        for j in 1..=self.k {
            let mut dist = vec![0.0; self.defs[j].len()];
            // all items one side
            let all_left = p.powi(j as i32);
            let all_right = q.powi(j as i32);
            for (id, &pr) in dl[j].iter().enumerate() {
                dist[id] += all_left * pr;
            }
            for (id, &pr) in dr[j].iter().enumerate() {
                dist[id] += all_right * pr;
            }
            for a in 1..j {
                let w = self.binomial[j][a] * p.powi(a as i32) * q.powi((j - a) as i32);
                if w == 0.0 {
                    continue;
                }
                for (l, &prl) in dl[a].iter().enumerate() {
                    if prl == 0.0 {
                        continue;
                    }
                    for (r, &prr) in dr[j - a].iter().enumerate() {
                        if prr == 0.0 {
                            continue;
                        }
                        let id = self.index[j][&(a, l, r)];
                        dist[id] += w * prl * prr;
                    }
                }
            }
            out.push(dist);
        }
        out
    }
}

/// Exact expected payoff of the biased random assignment for `f`.
pub fn alpha_exact(measure: &BiasedMeasure, f: &PayoffFunction) -> Result<f64> {
    let catalog = ShapeCatalog::new(f.arity())?;
    let avg = catalog.average_payoffs(f)?;
    Ok(alpha_from_catalog(&catalog, &avg, measure))
}

/// As [`alpha_exact`] with precomputed catalog and per-shape payoffs.
pub fn alpha_from_catalog(catalog: &ShapeCatalog, avg: &[f64], measure: &BiasedMeasure) -> f64 {
    let dist = catalog.shape_dist(measure);
    dist[catalog.k()].iter().zip(avg).map(|(p, a)| p * a).sum()
}

/// Monte-Carlo estimate of the same expectation: sample mean over fresh
/// k-variable solutions plus a 95% normal half-width. Deterministic in the
/// seed regardless of thread count (one RNG stream per trial).
pub fn alpha_mc(
    measure: &BiasedMeasure,
    f: &PayoffFunction,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    let k = f.arity();
    let vars: Vec<String> = (1..=k).map(|i| format!("s{i}")).collect();
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let sol = sample_solution(measure, &vars, &mut rng).expect("nonempty variables");
            let asg: Vec<NodeId> = vars
                .iter()
                .map(|v| sol.leaf_of(v).expect("assigned"))
                .collect();
            f.evaluate(&sol.tree, &asg).expect("arity checked")
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let half_width = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    };
    Ok((mean, half_width))
}

/// Knobs for the threshold search.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Exhaustive skeleton shapes up to this depth.
    pub depth_cap: usize,
    /// Simplex grid steps per unit (coarsened per skeleton to fit the budget).
    pub grid_resolution: usize,
    /// Max grid points per skeleton.
    pub point_budget: usize,
    /// Extra caterpillar skeletons (uniform and geometric profiles, both
    /// orientations) included as candidates.
    pub caterpillar_depths: Vec<usize>,
    pub caterpillar_deltas: Vec<f64>,
    /// Hill-climbing rounds around the incumbent.
    pub refine_rounds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            depth_cap: 4,
            grid_resolution: 20,
            point_budget: 4000,
            caterpillar_depths: vec![8, 16, 32, 64, 128],
            caterpillar_deltas: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.3],
            refine_rounds: 2,
        }
    }
}

/// Outcome of a threshold search.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub payoff: String,
    pub alpha: f64,
    pub measure_skeleton: String,
    pub measure_leaf_probs: Vec<f64>,
    pub skeletons_tried: usize,
    pub points_evaluated: usize,
    pub grid_resolution: usize,
    pub depth_cap: usize,
    /// Largest alpha seen at any grid point (equals `alpha` by definition).
    pub grid_max: f64,
    /// 95% half-width of an optional Monte-Carlo cross-check at the argmax.
    pub mc_half_width: Option<f64>,
    pub mc_mean: Option<f64>,
}

/// All full binary skeleton shapes of depth at most `cap`, deduplicated,
/// in a stable order.
fn skeletons_to_depth(cap: usize) -> Vec<Tree> {
    let mut by_depth: Vec<Vec<Tree>> = vec![vec![Tree::unlabeled_leaf()]];
    for h in 1..=cap {
        let prev: Vec<Tree> = by_depth.iter().flatten().cloned().collect();
        let mut next = Vec::new();
        for l in &prev {
            for r in &prev {
                let t = Tree::binary(l.clone(), r.clone());
                if tree_depth(&t) == h {
                    next.push(t);
                }
            }
        }
        by_depth.push(next);
    }
    by_depth.into_iter().flatten().collect()
}

fn tree_depth(t: &Tree) -> usize {
    t.leaves()
        .into_iter()
        .map(|l| t.depth(l))
        .max()
        .unwrap_or(0)
}

/// Simplex grid: all distributions with probabilities in multiples of
/// 1/resolution. Resolution is lowered until the point count fits `budget`.
fn simplex_grid(leaves: usize, resolution: usize, budget: usize) -> (usize, Vec<Vec<f64>>) {
    fn count(res: usize, parts: usize) -> u128 {
        // C(res + parts - 1, parts - 1)
        let mut c: u128 = 1;
        for i in 0..(parts - 1) {
            c = c * (res + i + 1) as u128 / (i + 1) as u128;
        }
        c
    }
    let mut res = resolution.max(1);
    while res > 1 && count(res, leaves) > budget as u128 {
        res -= 1;
    }
    let mut out = Vec::new();
    let mut cur = vec![0usize; leaves];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, res: usize, out: &mut Vec<Vec<f64>>) {
        if i == cur.len() - 1 {
            cur[i] = left;
            out.push(cur.iter().map(|&c| c as f64 / res as f64).collect());
            return;
        }
        for c in 0..=left {
            cur[i] = c;
            rec(i + 1, left - c, cur, res, out);
        }
    }
    rec(0, res, &mut cur, res, &mut out);
    (res, out)
}

struct Candidate {
    measure: BiasedMeasure,
    alpha: f64,
    index: usize,
}

fn search_measures<F: Fn(&BiasedMeasure) -> f64 + Sync>(
    cfg: &SearchConfig,
    score: &F,
) -> (Candidate, usize, usize) {
    let mut candidates: Vec<BiasedMeasure> = Vec::new();
    let skeletons = skeletons_to_depth(cfg.depth_cap);
    let skeleton_count = skeletons.len();
    for skel in &skeletons {
        let leaves = skel.leaf_count();
        let (_res, grid) = simplex_grid(leaves, cfg.grid_resolution, cfg.point_budget);
        for probs in grid {
            if let Ok(m) = BiasedMeasure::new(skel.clone(), probs) {
                candidates.push(m);
            }
        }
    }
    for &depth in &cfg.caterpillar_depths {
        if let Ok(m) = BiasedMeasure::uniform_caterpillar(depth) {
            candidates.push(m.mirrored());
            candidates.push(m);
        }
        for &delta in &cfg.caterpillar_deltas {
            if let Ok(m) = BiasedMeasure::caterpillar_bias(delta, depth) {
                candidates.push(m.mirrored());
                candidates.push(m);
            }
        }
    }
    let evaluated = candidates.len();
    let best = candidates
        .into_par_iter()
        .enumerate()
        .map(|(i, m)| {
            let a = score(&m);
            Candidate {
                measure: m,
                alpha: a,
                index: i,
            }
        })
        .reduce(
            || Candidate {
                measure: BiasedMeasure::uniform_splitting(),
                alpha: f64::NEG_INFINITY,
                index: usize::MAX,
            },
            |a, b| {
                if b.alpha > a.alpha || (b.alpha == a.alpha && b.index < a.index) {
                    b
                } else {
                    a
                }
            },
        );
    (best, skeleton_count, evaluated)
}

fn refine<F: Fn(&BiasedMeasure) -> f64>(
    cfg: &SearchConfig,
    mut best: Candidate,
    score: &F,
) -> (Candidate, usize) {
    let mut extra = 0;
    for round in 0..cfg.refine_rounds {
        let step = 1.0 / (cfg.grid_resolution as f64 * (1 << (round + 1)) as f64);
        let mut improved = true;
        while improved {
            improved = false;
            let probs = best.measure.leaf_probs().to_vec();
            let n = probs.len();
            for i in 0..n {
                for j in 0..n {
                    if i == j || probs[i] < step {
                        continue;
                    }
                    let mut cand = probs.clone();
                    cand[i] -= step;
                    cand[j] += step;
                    if let Ok(m) = BiasedMeasure::new(best.measure.skeleton().clone(), cand) {
                        extra += 1;
                        let a = score(&m);
                        if a > best.alpha + 1e-15 {
                            best = Candidate {
                                measure: m,
                                alpha: a,
                                index: best.index,
                            };
                            improved = true;
                        }
                    }
                }
            }
        }
    }
    (best, extra)
}

/// Grid search for the best biased measure: all full binary skeletons to
/// the depth cap with simplex-grid leaf distributions, a family of deep
/// caterpillar profiles, and deterministic local refinement around the
/// incumbent.
pub fn alpha_opt_search(f: &PayoffFunction, cfg: &SearchConfig) -> Result<ThresholdReport> {
    let catalog = ShapeCatalog::new(f.arity())?;
    let avg = catalog.average_payoffs(f)?;
    let score = |m: &BiasedMeasure| alpha_from_catalog(&catalog, &avg, m);
    let (best, skeletons, points) = search_measures(cfg, &score);
    let (best, extra) = refine(cfg, best, &score);
    Ok(ThresholdReport {
        payoff: f.name().to_string(),
        alpha: best.alpha,
        measure_skeleton: best.measure.skeleton().to_newick(),
        measure_leaf_probs: best.measure.leaf_probs().to_vec(),
        skeletons_tried: skeletons,
        points_evaluated: points + extra,
        grid_resolution: cfg.grid_resolution,
        depth_cap: cfg.depth_cap,
        grid_max: best.alpha,
        mc_half_width: None,
        mc_mean: None,
    })
}

/// Best mixture threshold sup over measures of the mu-weighted sum of
/// per-payoff alphas. Returns the value and the argmax measure.
pub fn mixture_threshold(
    payoffs: &[&PayoffFunction],
    mu: &[f64],
    cfg: &SearchConfig,
) -> Result<(f64, BiasedMeasure)> {
    if payoffs.is_empty() || payoffs.len() != mu.len() {
        return invalid("need one weight per payoff");
    }
    if mu.iter().any(|&m| m < 0.0) || (mu.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid("mixture weights must be nonnegative and sum to 1");
    }
    let parts: Vec<(ShapeCatalog, Vec<f64>)> = payoffs
        .iter()
        .map(|f| {
            let cat = ShapeCatalog::new(f.arity())?;
            let avg = cat.average_payoffs(f)?;
            Ok((cat, avg))
        })
        .collect::<Result<_>>()?;
    let score = |m: &BiasedMeasure| -> f64 {
        parts
            .iter()
            .zip(mu)
            .map(|((cat, avg), &w)| w * alpha_from_catalog(cat, avg, m))
            .sum()
    };
    let (best, _, _) = search_measures(cfg, &score);
    let (best, _) = refine(cfg, best, &score);
    Ok((best.alpha, best.measure))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{split_one_right_payoff, triplet_payoff};
    use num_traits::ToPrimitive;

    fn small_cfg() -> SearchConfig {
        SearchConfig {
            depth_cap: 2,
            grid_resolution: 8,
            point_budget: 500,
            caterpillar_depths: vec![8, 128],
            caterpillar_deltas: vec![0.05, 0.2],
            refine_rounds: 1,
        }
    }

    #[test]
    fn uniform_split_law_small_k() {
        let d2 = uniform_split_pattern_dist(2).unwrap();
        assert_eq!(d2.len(), 2);
        for (_, p) in &d2 {
            assert_eq!(p.to_f64().unwrap(), 0.5);
        }

        let d3 = uniform_split_pattern_dist(3).unwrap();
        assert_eq!(d3.len(), 12);
        let total: f64 = d3.iter().map(|(_, p)| p.to_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (_, p) in &d3 {
            assert_eq!(p.to_f64().unwrap(), 1.0 / 12.0);
        }

        let d4 = uniform_split_pattern_dist(4).unwrap();
        assert_eq!(d4.len(), 120);
        let total: f64 = d4.iter().map(|(_, p)| p.to_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_split_matches_monte_carlo() {
        // Brute-force sampling oracle for the k = 3 law.
        let measure = BiasedMeasure::uniform_splitting();
        let vars: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let trials = 60_000u64;
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..trials {
            let sol = sample_solution(&measure, &vars, &mut rng).unwrap();
            let asg: Vec<NodeId> = vars.iter().map(|v| sol.leaf_of(v).unwrap()).collect();
            let key = crate::pattern::match_pattern(&sol.tree, &asg)
                .unwrap()
                .key();
            *counts.entry(key).or_insert(0) += 1;
        }
        for (p, prob) in uniform_split_pattern_dist(3).unwrap() {
            let freq = *counts.get(&p.key()).unwrap_or(&0) as f64 / trials as f64;
            assert!(
                (freq - prob.to_f64().unwrap()).abs() < 0.01,
                "pattern {} freq {freq}",
                p.key()
            );
        }
    }

    #[test]
    fn exchangeability_of_split_law() {
        // Relabeling the items permutes pattern probabilities without
        // changing them: all patterns of one shape are equally likely.
        let d4 = uniform_split_pattern_dist(4).unwrap();
        let mut by_shape: BTreeMap<String, Vec<BigRational>> = BTreeMap::new();
        for (p, prob) in d4 {
            let shape = p
                .key()
                .chars()
                .filter(|c| ['(', ')', ','].contains(c))
                .collect::<String>();
            by_shape.entry(shape).or_default().push(prob);
        }
        for (_, probs) in by_shape {
            assert!(probs.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn alpha_exact_triplet_is_one_third() {
        let f = triplet_payoff();
        // Any measure gives exactly 1/3 for triplets by exchangeability.
        let measures = [
            BiasedMeasure::uniform_splitting(),
            BiasedMeasure::caterpillar_bias(0.1, 6).unwrap(),
            BiasedMeasure::uniform_caterpillar(5).unwrap(),
        ];
        for m in &measures {
            let a = alpha_exact(m, &f).unwrap();
            assert!((a - 1.0 / 3.0).abs() < 1e-12, "alpha {a}");
        }
    }

    #[test]
    fn alpha_exact_split_right_examples() {
        let f = split_one_right_payoff(6).unwrap();
        let uniform = alpha_exact(&BiasedMeasure::uniform_splitting(), &f).unwrap();
        // 720 / (2*6*14*30*62)
        assert!((uniform - 720.0 / 312480.0).abs() < 1e-12);
        assert!(uniform <= 0.2);

        let biased = BiasedMeasure::caterpillar_bias(0.05, 200).unwrap();
        let a = alpha_exact(&biased, &f).unwrap();
        // the deep geometric profile approaches the stage-product law
        let product: f64 = (3..=6u32)
            .map(|j| {
                let q: f64 = 0.95;
                let num = j as f64 * 0.05 * q.powi(j as i32 - 1);
                let den = 1.0 - q.powi(j as i32) - 0.05f64.powi(j as i32);
                num / den
            })
            .product();
        assert!((a - product).abs() < 0.01, "alpha {a} vs product {product}");
    }

    #[test]
    fn alpha_exact_constant_payoff() {
        let f = PayoffFunction::constant("one", 3, 1.0);
        for m in [
            BiasedMeasure::uniform_splitting(),
            BiasedMeasure::caterpillar_bias(0.3, 4).unwrap(),
        ] {
            assert!((alpha_exact(&m, &f).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_scaling_linearity() {
        let f = split_one_right_payoff(4).unwrap();
        let m = BiasedMeasure::caterpillar_bias(0.1, 10).unwrap();
        let a = alpha_exact(&m, &f).unwrap();
        let a_half = alpha_exact(&m, &f.scaled(0.5)).unwrap();
        assert!((a_half - 0.5 * a).abs() < 1e-12);
    }

    #[test]
    fn alpha_mc_agrees_with_exact() {
        let f = triplet_payoff();
        let m = BiasedMeasure::uniform_splitting();
        let (mean, hw) = alpha_mc(&m, &f, 40_000, 1).unwrap();
        let exact = alpha_exact(&m, &f).unwrap();
        assert!(
            (mean - exact).abs() <= 3.0 * hw,
            "mean {mean} exact {exact} hw {hw}"
        );

        let (single, hw1) = alpha_mc(&m, &f, 1, 5).unwrap();
        assert!(single == 0.0 || single == 1.0);
        assert_eq!(hw1, 0.0);

        let (a1, _) = alpha_mc(&m, &f, 1000, 9).unwrap();
        let (a2, _) = alpha_mc(&m, &f, 1000, 9).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn sample_solution_structure() {
        let m = BiasedMeasure::caterpillar_bias(0.2, 4).unwrap();
        let vars: Vec<String> = (1..=7).map(|i| format!("v{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let sol = sample_solution(&m, &vars, &mut rng).unwrap();
            assert!(sol.tree.is_full_binary());
            assert_eq!(sol.tree.leaf_count(), 7);
        }
        let one = sample_solution(&m, &vars[..1], &mut rng).unwrap();
        assert_eq!(one.tree.leaf_count(), 1);
    }

    #[test]
    fn search_triplet_stays_at_one_third() {
        let report = alpha_opt_search(&triplet_payoff(), &small_cfg()).unwrap();
        assert!((report.alpha - 1.0 / 3.0).abs() < 1e-9);
        assert!(report.grid_max <= 1.0 / 3.0 + 1e-9);
    }

    #[test]
    fn search_split_right_finds_biased_measure() {
        let f = split_one_right_payoff(6).unwrap();
        let report = alpha_opt_search(&f, &small_cfg()).unwrap();
        assert!(report.alpha >= 0.8, "alpha {}", report.alpha);
    }

    #[test]
    fn mixture_trivial_cases() {
        let t = triplet_payoff();
        let cfg = small_cfg();
        let single = mixture_threshold(&[&t], &[1.0], &cfg).unwrap().0;
        let solo = alpha_opt_search(&t, &cfg).unwrap().alpha;
        assert!((single - solo).abs() < 1e-12);

        let s4 = split_one_right_payoff(4).unwrap();
        let zeroed = mixture_threshold(&[&t, &s4], &[1.0, 0.0], &cfg).unwrap().0;
        assert!((zeroed - solo).abs() < 1e-12);
    }

    #[test]
    fn mixture_of_opposed_splits() {
        // No single measure serves both orientations: the balanced mixture
        // stays below the individual thresholds.
        let left = crate::problems::split_one_left_payoff(6).unwrap();
        let right = split_one_right_payoff(6).unwrap();
        let cfg = small_cfg();
        let (mix, _) = mixture_threshold(&[&left, &right], &[0.5, 0.5], &cfg).unwrap();
        let a_l = alpha_opt_search(&left, &cfg).unwrap().alpha;
        let a_r = alpha_opt_search(&right, &cfg).unwrap().alpha;
        assert!(
            mix <= a_l.max(a_r) + 1e-9,
            "mix {mix} beats max({a_l}, {a_r})"
        );
        assert!(mix < a_l.min(a_r), "mix {mix} should trail both thresholds");
    }

    #[test]
    fn sampled_shape_distribution_matches_dp() {
        // Monte-Carlo oracle for the shape law of the assignment process,
        // exercising skeleton placement (and with it leaf-order handling).
        let measure = BiasedMeasure::caterpillar_bias(0.3, 2).unwrap();
        let k = 3;
        let catalog = ShapeCatalog::new(k).unwrap();
        let dist = catalog.shape_dist(&measure);
        let vars: Vec<String> = (1..=k).map(|i| format!("v{i}")).collect();
        let trials = 40_000;
        let mut counts = vec![0u64; catalog.shape_count(k)];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let keys: Vec<String> = (0..catalog.shape_count(k))
            .map(|s| catalog.shape_tree(k, s).canonical_string())
            .collect();
        for _ in 0..trials {
            let sol = sample_solution(&measure, &vars, &mut rng).unwrap();
            let key = shape_key(&sol.tree, sol.tree.root());
            let id = keys.iter().position(|x| *x == key).unwrap();
            counts[id] += 1;
        }
        for (id, &c) in counts.iter().enumerate() {
            let freq = c as f64 / trials as f64;
            assert!(
                (freq - dist[k][id]).abs() < 0.01,
                "shape {id}: freq {freq} vs exact {}",
                dist[k][id]
            );
        }
    }

    fn shape_key(t: &Tree, v: NodeId) -> String {
        if t.is_leaf(v) {
            return "?".into();
        }
        let kids: Vec<String> = t.children(v).iter().map(|&c| shape_key(t, c)).collect();
        format!("({})", kids.join(","))
    }

    #[test]
    fn scaling_leaves_search_argmax_unchanged() {
        let f = split_one_right_payoff(4).unwrap();
        let cfg = SearchConfig {
            depth_cap: 1,
            grid_resolution: 6,
            point_budget: 100,
            caterpillar_depths: vec![8],
            caterpillar_deltas: vec![0.1],
            refine_rounds: 0,
        };
        let full = alpha_opt_search(&f, &cfg).unwrap();
        let half = alpha_opt_search(&f.scaled(0.5), &cfg).unwrap();
        assert!((half.alpha - 0.5 * full.alpha).abs() < 1e-12);
        assert_eq!(half.measure_skeleton, full.measure_skeleton);
        assert_eq!(half.measure_leaf_probs, full.measure_leaf_probs);
    }
}
