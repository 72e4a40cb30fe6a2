//! CSP instances over phylogenies, solutions, exact values, and brute-force
//! optima.
//!
//! An instance is a variable set plus a weighted list of payoff
//! applications; weights form a probability distribution after
//! normalization and are kept as exact rationals (value computation uses a
//! cached f64 per constraint). A solution maps variables bijectively onto
//! the leaves of a full binary ordered tree.

use crate::pattern::{permutations, PayoffFunction, PayoffRegistry};
use crate::tree::{NodeId, Tree};
use crate::{invalid, Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Default variable cap for [`brute_force_opt`].
pub const DEFAULT_BRUTE_CAP: usize = 10;
/// Default variable cap for [`opt_given_order`] (Catalan(12) = 208012 shapes).
pub const DEFAULT_ORDER_CAP: usize = 13;

/// Tolerance for real-valued weight comparisons.
pub const WEIGHT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Constraint {
    /// Index into the instance's payoff list.
    pub payoff: usize,
    /// Indices into the instance's variable list, in application order.
    pub vars: Vec<usize>,
    pub weight: BigRational,
    weight_f: f64,
}

impl Constraint {
    pub fn weight_f64(&self) -> f64 {
        self.weight_f
    }
}

/// Weighted CSP instance over named variables.
#[derive(Debug, Clone)]
pub struct Instance {
    vars: Vec<String>,
    var_index: BTreeMap<String, usize>,
    payoffs: Vec<PayoffFunction>,
    payoff_index: BTreeMap<String, usize>,
    constraints: Vec<Constraint>,
}

impl Instance {
    pub fn new(vars: Vec<String>) -> Result<Instance> {
        let mut var_index = BTreeMap::new();
        for (i, v) in vars.iter().enumerate() {
            if var_index.insert(v.clone(), i).is_some() {
                return invalid(format!("duplicate variable {v}"));
            }
        }
        Ok(Instance {
            vars,
            var_index,
            payoffs: Vec::new(),
            payoff_index: BTreeMap::new(),
            constraints: Vec::new(),
        })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn var_id(&self, name: &str) -> Result<usize> {
        self.var_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("variable {name}")))
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn payoff(&self, i: usize) -> &PayoffFunction {
        &self.payoffs[i]
    }

    pub fn payoffs(&self) -> &[PayoffFunction] {
        &self.payoffs
    }

    /// Registers a payoff function, deduplicating by name.
    pub fn add_payoff(&mut self, f: PayoffFunction) -> usize {
        if let Some(&i) = self.payoff_index.get(f.name()) {
            return i;
        }
        let i = self.payoffs.len();
        self.payoff_index.insert(f.name().to_string(), i);
        self.payoffs.push(f);
        i
    }

    pub fn add_constraint(
        &mut self,
        payoff_name: &str,
        vars: &[&str],
        weight: BigRational,
    ) -> Result<()> {
        let payoff = *self
            .payoff_index
            .get(payoff_name)
            .ok_or_else(|| Error::NotFound(format!("payoff function {payoff_name}")))?;
        if self.payoffs[payoff].arity() != vars.len() {
            return invalid(format!(
                "payoff {payoff_name} has arity {}, constraint names {} variables",
                self.payoffs[payoff].arity(),
                vars.len()
            ));
        }
        if weight.is_negative() {
            return invalid("constraint weight must be nonnegative");
        }
        let ids = vars
            .iter()
            .map(|v| self.var_id(v))
            .collect::<Result<Vec<_>>>()?;
        let mut distinct = ids.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != ids.len() {
            return invalid("constraint variables must be distinct");
        }
        let weight_f = rational_to_f64(&weight);
        self.constraints.push(Constraint {
            payoff,
            vars: ids,
            weight,
            weight_f,
        });
        Ok(())
    }

    /// Exact sum of constraint weights.
    pub fn total_weight(&self) -> BigRational {
        self.constraints.iter().map(|c| c.weight.clone()).sum()
    }

    /// Text form: `vars ...` header then one `W PAYOFF V1..Vk` line per
    /// constraint, with exact rational weights.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("vars ");
        out.push_str(&self.vars.join(" "));
        out.push('\n');
        for c in &self.constraints {
            let names: Vec<&str> = c.vars.iter().map(|&v| self.vars[v].as_str()).collect();
            out.push_str(&format!(
                "{} {} {}\n",
                weight_to_string(&c.weight),
                self.payoffs[c.payoff].name(),
                names.join(" ")
            ));
        }
        out
    }

    /// Parses the text form, resolving payoff names against `registry`.
    pub fn parse(text: &str, registry: &PayoffRegistry) -> Result<Instance> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty instance file".into()))?;
        let vars: Vec<String> = header
            .strip_prefix("vars")
            .ok_or_else(|| Error::Parse("instance file must start with a 'vars' line".into()))?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if vars.is_empty() {
            return Err(Error::Parse("'vars' line lists no variables".into()));
        }
        let mut inst = Instance::new(vars)?;
        for (lineno, line) in lines {
            let mut tok = line.split_whitespace();
            let ctx = |m: &str| Error::Parse(format!("line {}: {m}", lineno + 1));
            let weight = parse_weight(tok.next().ok_or_else(|| ctx("missing weight"))?)
                .map_err(|e| ctx(&e.to_string()))?;
            let name = tok.next().ok_or_else(|| ctx("missing payoff name"))?;
            let vars: Vec<&str> = tok.collect();
            if !inst.payoff_index.contains_key(name) {
                inst.add_payoff(registry.get(name)?.clone());
            }
            inst.add_constraint(name, &vars, weight)
                .map_err(|e| ctx(&e.to_string()))?;
        }
        Ok(inst)
    }

    /// Validates a parsed instance file as a probability distribution of
    /// constraints: positive total weight summing exactly to 1.
    pub fn validate_normalized(&self) -> Result<()> {
        let total = self.total_weight();
        if total != BigRational::one() {
            return Err(Error::Parse(format!(
                "constraint weights sum to {}, expected 1",
                weight_to_string(&total)
            )));
        }
        Ok(())
    }
}

/// Parses a weight token: integer, `p/q`, or decimal, all exact.
pub fn parse_weight(s: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("bad weight {s}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.parse().map_err(|_| bad())?;
        let d: BigInt = d.parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let int: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| bad())?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let numer: BigInt = frac.parse().map_err(|_| bad())?;
        let denom = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_part = BigRational::new(numer, denom);
        let int_part = BigRational::from_integer(int);
        return Ok(if neg {
            int_part - frac_part
        } else {
            int_part + frac_part
        });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

pub fn weight_to_string(w: &BigRational) -> String {
    if w.denom().is_one() {
        w.numer().to_string()
    } else {
        format!("{}/{}", w.numer(), w.denom())
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().expect("weight representable as f64")
}

/// A bijection from variables to the leaves of a full binary ordered tree.
#[derive(Debug, Clone)]
pub struct Solution {
    pub tree: Tree,
    assignment: BTreeMap<String, NodeId>,
}

impl Solution {
    pub fn new(tree: Tree, assignment: BTreeMap<String, NodeId>) -> Result<Solution> {
        tree.validate()?;
        if !tree.is_full_binary() {
            return invalid("solution trees must be full binary");
        }
        let leaves = tree.leaves();
        if assignment.len() != leaves.len() {
            return invalid(format!(
                "solution must assign all {} leaves, got {} variables",
                leaves.len(),
                assignment.len()
            ));
        }
        let mut used: Vec<NodeId> = assignment.values().copied().collect();
        used.sort_unstable();
        let mut expected = leaves.clone();
        expected.sort_unstable();
        if used != expected {
            return invalid("solution assignment must be a bijection onto the leaves");
        }
        Ok(Solution { tree, assignment })
    }

    /// Solution whose variables are the tree's own leaf labels.
    pub fn from_leaf_labels(tree: &Tree) -> Result<Solution> {
        let mut assignment = BTreeMap::new();
        for v in tree.leaves() {
            let label = tree
                .label(v)
                .ok_or_else(|| Error::InvalidArgument("unlabeled leaf".into()))?;
            assignment.insert(label.to_string(), v);
        }
        Solution::new(tree.clone(), assignment)
    }

    pub fn leaf_of(&self, var: &str) -> Result<NodeId> {
        self.assignment
            .get(var)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("variable {var}")))
    }

    pub fn assignment(&self) -> &BTreeMap<String, NodeId> {
        &self.assignment
    }

    /// Variables in the left-to-right order their leaves appear in.
    pub fn order(&self) -> Vec<String> {
        let by_leaf: BTreeMap<NodeId, &String> =
            self.assignment.iter().map(|(v, &l)| (l, v)).collect();
        self.tree
            .leaves()
            .into_iter()
            .map(|l| by_leaf[&l].clone())
            .collect()
    }
}

/// Weighted average payoff of `sol` on `inst`.
pub fn value(sol: &Solution, inst: &Instance) -> Result<f64> {
    let leaf_by_var = leaf_vector(sol, inst)?;
    value_with(inst, &sol.tree, &leaf_by_var)
}

fn leaf_vector(sol: &Solution, inst: &Instance) -> Result<Vec<NodeId>> {
    inst.vars().iter().map(|v| sol.leaf_of(v)).collect()
}

/// Value of an instance on a tree given per-variable leaf ids (indexed like
/// `inst.vars()`).
pub fn value_with(inst: &Instance, tree: &Tree, leaf_by_var: &[NodeId]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut asg: Vec<NodeId> = Vec::with_capacity(8);
    for c in inst.constraints() {
        asg.clear();
        asg.extend(c.vars.iter().map(|&v| leaf_by_var[v]));
        let payoff = inst.payoff(c.payoff).evaluate(tree, &asg)?;
        num += c.weight_f64() * payoff;
        den += c.weight_f64();
    }
    if den == 0.0 {
        return invalid("instance has zero total weight");
    }
    Ok(num / den)
}

/// Exact Catalan number (shape count for ordered full binary trees on n+1
/// leaves).
pub fn catalan(n: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 0..n {
        c = c * 2 * (2 * i as u128 + 1) / (i as u128 + 2);
    }
    c
}

/// Preorder left-subtree-size codes for all ordered full binary shapes on
/// `n` leaves, in the canonical recursive order (left size 1..n-1, then left
/// code, then right code).
pub fn shape_codes(n: usize) -> Vec<Vec<u8>> {
    assert!((1..=32).contains(&n));
    if n == 1 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for left in 1..n {
        for lc in shape_codes(left) {
            for rc in shape_codes(n - left) {
                let mut code = Vec::with_capacity(n - 1);
                code.push(left as u8);
                code.extend_from_slice(&lc);
                code.extend_from_slice(&rc);
                out.push(code);
            }
        }
    }
    out
}

/// Rebuilds the shape from its code, labeling leaves left to right from
/// `labels`.
pub fn tree_from_code(n: usize, code: &[u8], labels: &[String]) -> Tree {
    fn rec(n: usize, code: &mut &[u8], labels: &mut &[String]) -> Tree {
        if n == 1 {
            let t = Tree::leaf(labels[0].clone());
            *labels = &labels[1..];
            return t;
        }
        let left = code[0] as usize;
        *code = &code[1..];
        let l = rec(left, code, labels);
        let r = rec(n - left, code, labels);
        Tree::binary(l, r)
    }
    let mut code = code;
    let mut labels = labels;
    let t = rec(n, &mut code, &mut labels);
    debug_assert!(code.is_empty() && labels.is_empty());
    t
}

/// Exact optimum over all ordered full binary trees on the instance's
/// variables, enumerated shape-major (canonical shape order, then leaf
/// permutations in lexicographic order). Ties resolve to the first
/// candidate in that order.
pub fn brute_force_opt(inst: &Instance) -> Result<(f64, Solution)> {
    brute_force_opt_capped(inst, DEFAULT_BRUTE_CAP)
}

pub fn brute_force_opt_capped(inst: &Instance, cap: usize) -> Result<(f64, Solution)> {
    let n = inst.var_count();
    if n > cap {
        return Err(Error::Resource {
            what: "brute-force variable count".into(),
            got: n as u64,
            cap: cap as u64,
        });
    }
    if n == 0 {
        return invalid("instance has no variables");
    }
    let codes = shape_codes(n);
    let perms = permutations(n);
    let vars = inst.vars();
    let best = codes
        .par_iter()
        .enumerate()
        .map(|(si, code)| {
            let mut labels: Vec<String> = vec![String::new(); n];
            let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
            for (pi, perm) in perms.iter().enumerate() {
                for (slot, &v) in perm.iter().enumerate() {
                    labels[slot] = vars[v].clone();
                }
                let tree = tree_from_code(n, code, &labels);
                let mut leaf_by_var = vec![0; n];
                for (pos, leaf) in tree.leaves().into_iter().enumerate() {
                    leaf_by_var[perm[pos]] = leaf;
                }
                let val = value_with(inst, &tree, &leaf_by_var).expect("validated instance");
                if val > best.0 {
                    best = (val, si, pi);
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX, usize::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                    b
                } else {
                    a
                }
            },
        );
    let (val, si, pi) = best;
    let perm = &perms[pi];
    let labels: Vec<String> = perm.iter().map(|&v| vars[v].clone()).collect();
    let tree = tree_from_code(n, &codes[si], &labels);
    let sol = Solution::from_leaf_labels(&tree)?;
    Ok((val, sol))
}

/// Exact optimum over the ordered full binary shapes whose leaf order is
/// exactly `pi`.
pub fn opt_given_order(inst: &Instance, pi: &[String]) -> Result<(f64, Solution)> {
    opt_given_order_capped(inst, pi, DEFAULT_ORDER_CAP)
}

pub fn opt_given_order_capped(
    inst: &Instance,
    pi: &[String],
    cap: usize,
) -> Result<(f64, Solution)> {
    let n = inst.var_count();
    if n > cap {
        return Err(Error::Resource {
            what: "order-constrained variable count".into(),
            got: n as u64,
            cap: cap as u64,
        });
    }
    let mut sorted: Vec<&String> = pi.iter().collect();
    sorted.sort();
    let mut expect: Vec<&String> = inst.vars().iter().collect();
    expect.sort();
    if sorted != expect {
        return invalid("order must be a permutation of the instance variables");
    }
    let var_pos: BTreeMap<&str, usize> = pi
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let pos_of_var: Vec<usize> = inst.vars().iter().map(|v| var_pos[v.as_str()]).collect();
    let codes = shape_codes(n);
    let labels: Vec<String> = pi.to_vec();
    let best = codes
        .par_iter()
        .enumerate()
        .map(|(si, code)| {
            let tree = tree_from_code(n, code, &labels);
            let leaves = tree.leaves();
            let leaf_by_var: Vec<NodeId> = pos_of_var.iter().map(|&p| leaves[p]).collect();
            let val = value_with(inst, &tree, &leaf_by_var).expect("validated instance");
            (val, si)
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    let (val, si) = best;
    let tree = tree_from_code(n, &codes[si], &labels);
    let sol = Solution::from_leaf_labels(&tree)?;
    Ok((val, sol))
}

/// Weighted variable co-occurrence graph: a clique per constraint, edge
/// weights from normalized constraint weights.
#[derive(Debug, Clone)]
pub struct GaifmanGraph {
    vars: Vec<String>,
    weights: BTreeMap<(usize, usize), f64>,
}

impl GaifmanGraph {
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.weights.iter().map(|(&e, &w)| (e, w))
    }

    pub fn weight_between(&self, a: usize, b: usize) -> f64 {
        let key = if a < b { (a, b) } else { (b, a) };
        self.weights.get(&key).copied().unwrap_or(0.0)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Sum of edge weights incident to each variable.
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.vars.len()];
        for (&(a, b), &w) in &self.weights {
            deg[a] += w;
            deg[b] += w;
        }
        deg
    }
}

/// Clique expansion of the instance with normalized weights.
pub fn gaifman(inst: &Instance) -> GaifmanGraph {
    let total = inst
        .constraints()
        .iter()
        .map(|c| c.weight_f64())
        .sum::<f64>();
    let scale = if total > 0.0 { 1.0 / total } else { 1.0 };
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for c in inst.constraints() {
        let w = c.weight_f64() * scale;
        for i in 0..c.vars.len() {
            for j in i + 1..c.vars.len() {
                let (a, b) = (c.vars[i].min(c.vars[j]), c.vars[i].max(c.vars[j]));
                *weights.entry((a, b)).or_insert(0.0) += w;
            }
        }
    }
    GaifmanGraph {
        vars: inst.vars().to_vec(),
        weights,
    }
}

/// True iff every variable carries the same total (normalized) constraint
/// weight, within [`WEIGHT_EPS`].
pub fn is_regular(inst: &Instance) -> bool {
    let total = inst
        .constraints()
        .iter()
        .map(|c| c.weight_f64())
        .sum::<f64>();
    let scale = if total > 0.0 { 1.0 / total } else { 1.0 };
    let mut incident = vec![0.0; inst.var_count()];
    for c in inst.constraints() {
        for &v in &c.vars {
            incident[v] += c.weight_f64() * scale;
        }
    }
    let first = incident.first().copied().unwrap_or(0.0);
    incident.iter().all(|&w| (w - first).abs() <= WEIGHT_EPS)
}

/// Uniformly weighted random instance with `m` constraints of the given
/// payoff over `n` variables named `x1..xn`. Deterministic in the seed.
pub fn gen_random_instance(
    n: usize,
    m: usize,
    payoff: &PayoffFunction,
    seed: u64,
) -> Result<Instance> {
    use rand::prelude::*;
    let k = payoff.arity();
    if n < k {
        return invalid(format!(
            "need at least {k} variables for arity-{k} constraints"
        ));
    }
    let vars: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let mut inst = Instance::new(vars.clone())?;
    inst.add_payoff(payoff.clone());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = BigRational::new(BigInt::one(), BigInt::from(m));
    for _ in 0..m {
        let mut pool: Vec<usize> = (0..n).collect();
        let mut tuple = Vec::with_capacity(k);
        for _ in 0..k {
            let i = rng.gen_range(0..pool.len());
            tuple.push(pool.swap_remove(i));
        }
        let names: Vec<&str> = tuple.iter().map(|&v| vars[v].as_str()).collect();
        inst.add_constraint(payoff.name(), &names, w.clone())?;
    }
    Ok(inst)
}
