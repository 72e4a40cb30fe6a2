//! Tree patterns, pattern tables, and bracket predicates.
//!
//! A pattern is a small tree whose leaves are labeled by variable slots
//! `x1..xk`; it plays the role a row of a truth table plays for Boolean
//! functions. A payoff function maps each pattern to a payoff in `[0, 1]`
//! (a pattern table), with a default for unlisted patterns. Patterns can be
//! compiled to conjunctions of bracket predicates, the primitive constraints
//! `[a < b]` (leaf order) and subtree-membership at the LCA of a triple.

use crate::tree::{NodeId, Tree};
use crate::{invalid, Error, Result};
use std::collections::BTreeMap;
use std::fmt;

/// Largest pattern arity accepted by the enumeration helpers.
pub const MAX_ENUM_ARITY: usize = 6;

/// 1-based variable slot of a pattern.
pub type Slot = usize;

pub fn slot_label(i: Slot) -> String {
    format!("x{i}")
}

pub fn parse_slot(label: &str) -> Option<Slot> {
    label
        .strip_prefix('x')
        .and_then(|s| s.parse().ok())
        .filter(|&i| i >= 1)
}

/// Tree with leaves labeled by slots `x1..xk`, each exactly once.
#[derive(Debug, Clone)]
pub struct Pattern {
    tree: Tree,
    arity: usize,
}

impl Pattern {
    pub fn new(tree: Tree) -> Result<Pattern> {
        tree.validate()?;
        let labels = tree.leaf_labels()?;
        let k = labels.len();
        let mut seen = vec![false; k];
        for l in &labels {
            match parse_slot(l) {
                Some(i) if i <= k && !seen[i - 1] => seen[i - 1] = true,
                _ => return invalid(format!("pattern leaves must be x1..x{k}, got {l}")),
            }
        }
        Ok(Pattern { tree, arity: k })
    }

    /// Builds a pattern by assigning slots to the leaves of an unlabeled
    /// shape in left-to-right order: leaf `i` gets slot `slots[i]`.
    pub fn from_shape(shape: &Tree, slots: &[Slot]) -> Result<Pattern> {
        let leaves = shape.leaves();
        if leaves.len() != slots.len() {
            return invalid("slot count must match leaf count");
        }
        let labels: Vec<(NodeId, String)> = leaves
            .into_iter()
            .zip(slots)
            .map(|(v, &s)| (v, slot_label(s)))
            .collect();
        Pattern::new(shape.relabeled(&labels)?)
    }

    pub fn parse(text: &str) -> Result<Pattern> {
        Pattern::new(Tree::parse_newick(text)?)
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Canonical lookup key, e.g. `((x1,x2),x3)`.
    pub fn key(&self) -> String {
        self.tree.canonical_string()
    }

    /// Slots in left-to-right leaf order.
    pub fn slot_order(&self) -> Vec<Slot> {
        self.tree
            .leaf_labels()
            .expect("pattern leaves are labeled")
            .iter()
            .map(|l| parse_slot(l).expect("pattern labels are slots"))
            .collect()
    }

    /// True if the left-to-right slot order is `1, 2, ..., k`.
    pub fn is_slot_ordered(&self) -> bool {
        self.slot_order()
            .iter()
            .enumerate()
            .all(|(i, &s)| s == i + 1)
    }

    /// Node id of the leaf carrying slot `i`.
    pub fn leaf_of_slot(&self, i: Slot) -> NodeId {
        self.tree.find_leaf(&slot_label(i)).expect("slot present")
    }

    /// All patterns reachable by permuting child order at internal nodes.
    pub fn child_order_orbit(&self) -> Vec<Pattern> {
        let variants = child_order_variants(&self.tree, self.tree.root());
        let mut seen = BTreeMap::new();
        for t in variants {
            let p = Pattern::new(t).expect("orbit preserves slot labels");
            seen.entry(p.key()).or_insert(p);
        }
        seen.into_values().collect()
    }
}

fn child_order_variants(tree: &Tree, v: NodeId) -> Vec<Tree> {
    if tree.is_leaf(v) {
        return vec![match tree.label(v) {
            Some(l) => Tree::leaf(l),
            None => Tree::unlabeled_leaf(),
        }];
    }
    let child_variants: Vec<Vec<Tree>> = tree
        .children(v)
        .iter()
        .map(|&c| child_order_variants(tree, c))
        .collect();
    let mut combos: Vec<Vec<Tree>> = vec![Vec::new()];
    for cv in &child_variants {
        let mut next = Vec::new();
        for combo in &combos {
            for t in cv {
                let mut c = combo.clone();
                c.push(t.clone());
                next.push(c);
            }
        }
        combos = next;
    }
    let mut out = Vec::new();
    for combo in combos {
        for perm in permutations(combo.len()) {
            let kids: Vec<Tree> = perm.iter().map(|&i| combo[i].clone()).collect();
            out.push(Tree::node(kids));
        }
    }
    out
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut used = vec![false; n];
    fn rec(n: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(n, &mut cur, &mut used, &mut out);
    out
}

/// Matches `k` assigned leaves of `tree` against patterns: restricts to the
/// image of the assignment and relabels the leaf assigned to slot `i` as `xi`.
pub fn match_pattern(tree: &Tree, assignment: &[NodeId]) -> Result<Pattern> {
    let mut sorted = assignment.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != assignment.len() {
        return invalid("assignment must be injective");
    }
    let (restricted, map) = tree.restrict_with_map(assignment)?;
    let lookup: BTreeMap<NodeId, NodeId> = map.into_iter().collect();
    let labels: Vec<(NodeId, String)> = assignment
        .iter()
        .enumerate()
        .map(|(i, old)| (lookup[old], slot_label(i + 1)))
        .collect();
    Pattern::new(restricted.relabeled(&labels)?)
}

/// Pattern table: payoffs in `[0,1]` per canonical pattern, with a default
/// for unlisted patterns.
#[derive(Debug, Clone)]
pub struct PayoffFunction {
    name: String,
    arity: usize,
    table: BTreeMap<String, f64>,
    default_payoff: f64,
    /// False when the table was closed under child-order swaps, i.e. the
    /// payoff ignores the planar order of subtrees.
    ordered: bool,
}

impl PayoffFunction {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        entries: impl IntoIterator<Item = (Pattern, f64)>,
        default_payoff: f64,
    ) -> Result<PayoffFunction> {
        let mut table = BTreeMap::new();
        for (p, payoff) in entries {
            if p.arity() != arity {
                return invalid("pattern arity does not match payoff arity");
            }
            if !(0.0..=1.0).contains(&payoff) {
                return invalid(format!("payoff {payoff} outside [0,1]"));
            }
            if table.insert(p.key(), payoff).is_some() {
                return invalid(format!("duplicate table entry for {}", p.key()));
            }
        }
        if !(0.0..=1.0).contains(&default_payoff) {
            return invalid("default payoff outside [0,1]");
        }
        Ok(PayoffFunction {
            name: name.into(),
            arity,
            table,
            default_payoff,
            ordered: true,
        })
    }

    /// Payoff with an empty table: every pattern scores `value`.
    pub fn constant(name: impl Into<String>, arity: usize, value: f64) -> PayoffFunction {
        PayoffFunction {
            name: name.into(),
            arity,
            table: BTreeMap::new(),
            default_payoff: value,
            ordered: true,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn default_payoff(&self) -> f64 {
        self.default_payoff
    }

    pub fn is_ordered(&self) -> bool {
        self.ordered
    }

    pub fn table(&self) -> impl Iterator<Item = (&str, f64)> {
        self.table.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    pub fn payoff_of_key(&self, key: &str) -> f64 {
        self.table.get(key).copied().unwrap_or(self.default_payoff)
    }

    pub fn payoff_of_pattern(&self, p: &Pattern) -> f64 {
        self.payoff_of_key(&p.key())
    }

    /// Payoff of the pattern matched by `assignment` in `tree` (slot `i`
    /// maps to leaf `assignment[i]`).
    pub fn evaluate(&self, tree: &Tree, assignment: &[NodeId]) -> Result<f64> {
        if assignment.len() != self.arity {
            return invalid(format!(
                "payoff {} has arity {}, got {} leaves",
                self.name,
                self.arity,
                assignment.len()
            ));
        }
        Ok(self.payoff_of_key(&match_pattern(tree, assignment)?.key()))
    }

    /// True if some listed pattern attains payoff 1.
    pub fn is_satisfiable(&self) -> bool {
        self.table.values().any(|&v| v == 1.0)
    }

    /// A payoff-1 pattern, preferring one whose slots read `x1..xk` left to
    /// right; ties broken by canonical key order.
    pub fn satisfying_pattern(&self) -> Option<Pattern> {
        let ones: Vec<Pattern> = self
            .table
            .iter()
            .filter(|(_, &v)| v == 1.0)
            .map(|(k, _)| Pattern::parse(k).expect("table keys are canonical patterns"))
            .collect();
        ones.iter()
            .find(|p| p.is_slot_ordered())
            .or_else(|| ones.first())
            .cloned()
    }

    /// Closes the table under child-order swaps, marking the payoff as
    /// order-insensitive. Conflicting payoffs within an orbit are an error.
    pub fn close_under_child_swaps(mut self) -> Result<PayoffFunction> {
        let mut closed: BTreeMap<String, f64> = BTreeMap::new();
        for (key, &payoff) in &self.table {
            let p = Pattern::parse(key)?;
            for variant in p.child_order_orbit() {
                match closed.insert(variant.key(), payoff) {
                    Some(prev) if prev != payoff => {
                        return invalid(format!(
                            "child-swap orbit of {key} conflicts: {prev} vs {payoff}"
                        ));
                    }
                    _ => {}
                }
            }
        }
        self.table = closed;
        self.ordered = false;
        Ok(self)
    }

    /// Same table with every payoff (and the default) scaled by `c`.
    pub fn scaled(&self, c: f64) -> PayoffFunction {
        PayoffFunction {
            name: format!("{}*{c}", self.name),
            arity: self.arity,
            table: self.table.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
            default_payoff: self.default_payoff * c,
            ordered: self.ordered,
        }
    }
}

/// Primitive constraints whose conjunctions express patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BracketPredicate {
    /// `[xi < xj]`: slot `i`'s leaf precedes slot `j`'s in leaf order.
    PairOrder(Slot, Slot),
    /// Subtree membership of three slots at their LCA: `childs[t]` is the
    /// rank (1-based, left to right) of the child subtree of the LCA that
    /// contains `slots[t]`, ranked among the distinct children used by the
    /// three slots. Ranks are normalized so only grouping and relative
    /// order matter; `[xi,xj < xl]` is `slots (i,j,l)`, `childs (1,1,2)`.
    TripleSplit { slots: [Slot; 3], childs: [u8; 3] },
}

impl BracketPredicate {
    /// `[xi, xj < xl]` in the binary bracket notation.
    pub fn pair_below(i: Slot, j: Slot, l: Slot) -> BracketPredicate {
        BracketPredicate::TripleSplit {
            slots: [i, j, l],
            childs: [1, 1, 2],
        }
    }

    /// `[xi < xj, xl]` in the binary bracket notation.
    pub fn single_below(i: Slot, j: Slot, l: Slot) -> BracketPredicate {
        BracketPredicate::TripleSplit {
            slots: [i, j, l],
            childs: [1, 2, 2],
        }
    }

    pub fn validate(&self, arity: usize, tree_arity: usize) -> Result<()> {
        match self {
            BracketPredicate::PairOrder(a, b) => {
                if *a == *b || *a < 1 || *b < 1 || *a > arity || *b > arity {
                    return invalid("pair-order slots must be distinct and within arity");
                }
            }
            BracketPredicate::TripleSplit { slots, childs } => {
                let mut s = slots.to_vec();
                s.sort_unstable();
                s.dedup();
                if s.len() != 3 || slots.iter().any(|&x| x < 1 || x > arity) {
                    return invalid("triple-split slots must be distinct and within arity");
                }
                if childs.iter().any(|&c| c < 1 || c as usize > tree_arity) {
                    return invalid("triple-split child indices must be in 1..=r");
                }
                if childs[0] == childs[1] && childs[1] == childs[2] {
                    return invalid("triple-split child indices cannot all coincide");
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for BracketPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketPredicate::PairOrder(a, b) => write!(f, "[x{a}<x{b}]"),
            BracketPredicate::TripleSplit { slots, childs } => {
                let max = *childs.iter().max().unwrap();
                let mut groups = Vec::new();
                for rank in 1..=max {
                    let g: Vec<String> = slots
                        .iter()
                        .zip(childs)
                        .filter(|(_, &c)| c == rank)
                        .map(|(&s, _)| format!("x{s}"))
                        .collect();
                    if !g.is_empty() {
                        groups.push(g.join(","));
                    }
                }
                write!(f, "[{}]", groups.join("<"))
            }
        }
    }
}

fn normalized_ranks(indices: [usize; 3]) -> [u8; 3] {
    let mut distinct: Vec<usize> = indices.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut out = [0u8; 3];
    for (t, &ix) in indices.iter().enumerate() {
        out[t] = (distinct.iter().position(|&d| d == ix).unwrap() + 1) as u8;
    }
    out
}

/// Child-rank triple of three leaves at their LCA, normalized to ranks among
/// the distinct child subtrees used.
fn triple_ranks(tree: &Tree, leaves: [NodeId; 3]) -> Result<[u8; 3]> {
    let lca = tree.lca(&leaves)?;
    let mut idx = [0usize; 3];
    for (t, &leaf) in leaves.iter().enumerate() {
        idx[t] = tree
            .child_index_towards(lca, leaf)
            .ok_or_else(|| Error::InvalidArgument("leaf equals its own lca".into()))?;
    }
    Ok(normalized_ranks(idx))
}

/// Compiles a pattern into an equivalent conjunction of bracket predicates:
/// pair orders for consecutive in-order leaves and one triple split per
/// 3-subset of slots.
pub fn compile_to_brackets(p: &Pattern) -> Vec<BracketPredicate> {
    let order = p.slot_order();
    let mut out = Vec::new();
    for w in order.windows(2) {
        out.push(BracketPredicate::PairOrder(w[0], w[1]));
    }
    let k = p.arity();
    for a in 1..=k {
        for b in a + 1..=k {
            for c in b + 1..=k {
                let leaves = [p.leaf_of_slot(a), p.leaf_of_slot(b), p.leaf_of_slot(c)];
                let childs = triple_ranks(p.tree(), leaves).expect("pattern leaves are distinct");
                out.push(BracketPredicate::TripleSplit {
                    slots: [a, b, c],
                    childs,
                });
            }
        }
    }
    out
}

/// Evaluates a conjunction of bracket predicates on `tree` under the slot
/// assignment (slot `i` maps to leaf `assignment[i]`).
pub fn eval_brackets(
    predicates: &[BracketPredicate],
    tree: &Tree,
    assignment: &[NodeId],
) -> Result<bool> {
    let positions = tree.leaf_positions();
    let pos = |slot: Slot| -> Result<usize> {
        let leaf = *assignment
            .get(slot - 1)
            .ok_or_else(|| Error::InvalidArgument(format!("slot x{slot} not assigned")))?;
        positions
            .get(leaf)
            .copied()
            .flatten()
            .ok_or_else(|| Error::NotFound(format!("leaf {leaf} not in tree")))
    };
    for pred in predicates {
        match pred {
            BracketPredicate::PairOrder(a, b) => {
                if pos(*a)? >= pos(*b)? {
                    return Ok(false);
                }
            }
            BracketPredicate::TripleSplit { slots, childs } => {
                let leaves = [
                    assignment[slots[0] - 1],
                    assignment[slots[1] - 1],
                    assignment[slots[2] - 1],
                ];
                if triple_ranks(tree, leaves)? != *childs {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// All ordered tree shapes with `n` unlabeled leaves and internal arity
/// `2..=max_arity`, in a stable recursive order.
pub fn enumerate_shapes(n: usize, max_arity: usize) -> Vec<Tree> {
    assert!(n >= 1 && max_arity >= 2);
    if n == 1 {
        return vec![Tree::unlabeled_leaf()];
    }
    let mut out = Vec::new();
    for parts in 2..=max_arity.min(n) {
        for comp in compositions(n, parts) {
            let sub_lists: Vec<Vec<Tree>> = comp
                .iter()
                .map(|&c| enumerate_shapes(c, max_arity))
                .collect();
            let mut combos: Vec<Vec<Tree>> = vec![Vec::new()];
            for list in &sub_lists {
                let mut next = Vec::new();
                for combo in &combos {
                    for t in list {
                        let mut c = combo.clone();
                        c.push(t.clone());
                        next.push(c);
                    }
                }
                combos = next;
            }
            out.extend(combos.into_iter().map(Tree::node));
        }
    }
    out
}

fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            if left >= 1 {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for first in 1..=left.saturating_sub(parts - 1) {
            cur.push(first);
            rec(left - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    rec(n, parts, &mut cur, &mut out);
    out
}

/// All canonical patterns on `k` slots over trees of arity at most `r`.
pub fn enumerate_patterns(k: usize, r: usize) -> Result<Vec<Pattern>> {
    if k < 1 || r < 2 {
        return invalid("need k >= 1 and r >= 2");
    }
    if k > MAX_ENUM_ARITY {
        return Err(Error::Resource {
            what: "pattern enumeration arity".into(),
            got: k as u64,
            cap: MAX_ENUM_ARITY as u64,
        });
    }
    let mut out = Vec::new();
    for shape in enumerate_shapes(k, r) {
        for perm in permutations(k) {
            let slots: Vec<Slot> = perm.iter().map(|&i| i + 1).collect();
            out.push(Pattern::from_shape(&shape, &slots)?);
        }
    }
    Ok(out)
}

/// Named collection of payoff functions.
#[derive(Debug, Clone, Default)]
pub struct PayoffRegistry {
    payoffs: BTreeMap<String, PayoffFunction>,
}

impl PayoffRegistry {
    pub fn new() -> PayoffRegistry {
        PayoffRegistry::default()
    }

    pub fn insert(&mut self, f: PayoffFunction) {
        self.payoffs.insert(f.name().to_string(), f);
    }

    pub fn get(&self, name: &str) -> Result<&PayoffFunction> {
        self.payoffs
            .get(name)
            .ok_or_else(|| Error::NotFound(format!("payoff function {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.payoffs.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.payoffs.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PayoffFunction> {
        self.payoffs.values()
    }

    /// Text form: one `payoff NAME` block per function, a `default` line when
    /// nonzero, and one `PATTERN PAYOFF` line per table entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in self.payoffs.values() {
            out.push_str(&format!("payoff {}\n", f.name()));
            if f.default_payoff() != 0.0 {
                out.push_str(&format!("default {}\n", f.default_payoff()));
            }
            for (key, payoff) in f.table() {
                out.push_str(&format!("{key} {payoff}\n"));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<PayoffRegistry> {
        let mut reg = PayoffRegistry::new();
        let mut name: Option<String> = None;
        let mut default_payoff = 0.0;
        let mut entries: Vec<(Pattern, f64)> = Vec::new();
        let flush = |name: &mut Option<String>,
                     default_payoff: &mut f64,
                     entries: &mut Vec<(Pattern, f64)>,
                     reg: &mut PayoffRegistry|
         -> Result<()> {
            if let Some(n) = name.take() {
                let arity = entries
                    .first()
                    .map(|(p, _)| p.arity())
                    .ok_or_else(|| Error::Parse(format!("payoff {n} has no patterns")))?;
                reg.insert(PayoffFunction::new(
                    n,
                    arity,
                    entries.drain(..),
                    *default_payoff,
                )?);
                *default_payoff = 0.0;
            }
            Ok(())
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(n) = line.strip_prefix("payoff ") {
                flush(&mut name, &mut default_payoff, &mut entries, &mut reg)?;
                name = Some(n.trim().to_string());
                continue;
            }
            if name.is_none() {
                return Err(Error::Parse(format!(
                    "line {}: expected a 'payoff NAME' header first",
                    lineno + 1
                )));
            }
            if let Some(d) = line.strip_prefix("default ") {
                default_payoff = d
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad default", lineno + 1)))?;
            } else {
                let (pat, val) = line.rsplit_once(' ').ok_or_else(|| {
                    Error::Parse(format!("line {}: expected 'PATTERN PAYOFF'", lineno + 1))
                })?;
                let payoff: f64 = val
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad payoff", lineno + 1)))?;
                entries.push((Pattern::parse(pat.trim())?, payoff));
            }
        }
        flush(&mut name, &mut default_payoff, &mut entries, &mut reg)?;
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::triplet_payoff;

    #[test]
    fn match_pattern_examples() {
        let t1 = Tree::parse_newick("((a,(b,e)),(c,d));").unwrap();
        let asg: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|l| t1.find_leaf(l).unwrap())
            .collect();
        assert_eq!(match_pattern(&t1, &asg).unwrap().key(), "((x1,x2),x3)");

        // a and b in the wrong order.
        let t2 = Tree::parse_newick("((b,a),(c,d));").unwrap();
        let asg: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|l| t2.find_leaf(l).unwrap())
            .collect();
        assert_eq!(match_pattern(&t2, &asg).unwrap().key(), "((x2,x1),x3)");

        // Pattern of a 3-leaf tree is the tree itself.
        let t3 = Tree::parse_newick("((x,y),z);").unwrap();
        let asg: Vec<_> = ["x", "y", "z"]
            .iter()
            .map(|l| t3.find_leaf(l).unwrap())
            .collect();
        assert_eq!(match_pattern(&t3, &asg).unwrap().key(), "((x1,x2),x3)");
    }

    #[test]
    fn match_pattern_rejects_repeats() {
        let t = Tree::parse_newick("((a,b),c);").unwrap();
        let a = t.find_leaf("a").unwrap();
        let c = t.find_leaf("c").unwrap();
        assert!(match_pattern(&t, &[a, a, c]).is_err());
    }

    #[test]
    fn payoff_evaluation() {
        let f = triplet_payoff();
        let fig = Tree::parse_newick("((lion,tiger),((whale,dolphin),tuna));").unwrap();
        let asg: Vec<_> = ["whale", "dolphin", "tuna"]
            .iter()
            .map(|l| fig.find_leaf(l).unwrap())
            .collect();
        assert_eq!(f.evaluate(&fig, &asg).unwrap(), 1.0);

        // (a,c,b) on ((a,b),c): matched pattern puts b alone, triplet broken.
        let t = Tree::parse_newick("((a,b),c);").unwrap();
        let asg: Vec<_> = ["a", "c", "b"]
            .iter()
            .map(|l| t.find_leaf(l).unwrap())
            .collect();
        assert_eq!(f.evaluate(&t, &asg).unwrap(), 0.0);

        let empty = PayoffFunction::new("zero", 3, Vec::new(), 0.0).unwrap();
        assert_eq!(empty.evaluate(&t, &asg).unwrap(), 0.0);
    }

    #[test]
    fn compile_triplet_patterns() {
        let first = Pattern::parse("((x1,x2),x3)").unwrap();
        let c = compile_to_brackets(&first);
        assert!(c.contains(&BracketPredicate::PairOrder(1, 2)));
        assert!(c.contains(&BracketPredicate::pair_below(1, 2, 3)));

        let third = Pattern::parse("(x3,(x1,x2))").unwrap();
        let c = compile_to_brackets(&third);
        assert!(c.contains(&BracketPredicate::PairOrder(1, 2)));
        // [x3 < x1,x2]: slots (1,2,3) sit in child ranks (2,2,1).
        assert!(c.contains(&BracketPredicate::TripleSplit {
            slots: [1, 2, 3],
            childs: [2, 2, 1]
        }));

        let single = Pattern::parse("x1").unwrap();
        assert!(compile_to_brackets(&single).is_empty());
    }

    #[test]
    fn bracket_evaluation() {
        let t = Tree::parse_newick("((a,b),c);").unwrap();
        let asg: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|l| t.find_leaf(l).unwrap())
            .collect();
        let order = [BracketPredicate::PairOrder(1, 2)];
        assert!(eval_brackets(&order, &t, &asg).unwrap());
        let below = [BracketPredicate::pair_below(1, 2, 3)];
        assert!(eval_brackets(&below, &t, &asg).unwrap());

        // c placed next to a: [x1,x2 < x3] fails.
        let t2 = Tree::parse_newick("((a,c),b);").unwrap();
        let asg: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|l| t2.find_leaf(l).unwrap())
            .collect();
        assert!(!eval_brackets(&below, &t2, &asg).unwrap());
    }

    #[test]
    fn bracket_display() {
        assert_eq!(BracketPredicate::PairOrder(1, 2).to_string(), "[x1<x2]");
        assert_eq!(
            BracketPredicate::pair_below(1, 2, 3).to_string(),
            "[x1,x2<x3]"
        );
        assert_eq!(
            BracketPredicate::single_below(3, 1, 2).to_string(),
            "[x3<x1,x2]"
        );
    }

    #[test]
    fn enumerate_counts() {
        // Shape counts are Catalan numbers for binary trees.
        fn catalan(n: usize) -> usize {
            (0..n).fold(1usize, |c, i| c * 2 * (2 * i + 1) / (i + 2))
        }
        assert_eq!(enumerate_patterns(1, 2).unwrap().len(), 1);
        let p3 = enumerate_patterns(3, 2).unwrap();
        assert_eq!(p3.len(), catalan(2) * 6);
        assert_eq!(p3.len(), 12);
        let p4 = enumerate_patterns(4, 2).unwrap();
        assert_eq!(p4.len(), catalan(3) * 24);
        assert_eq!(p4.len(), 120);
        assert!(matches!(
            enumerate_patterns(9, 2),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn enumerate_has_no_duplicates() {
        let mut keys: Vec<String> = enumerate_patterns(4, 3)
            .unwrap()
            .iter()
            .map(|p| p.key())
            .collect();
        let n = keys.len();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), n);
    }

    #[test]
    fn exactly_one_pattern_matches() {
        // Pattern-table partition: on any tree/assignment exactly one
        // canonical pattern matches.
        let patterns = enumerate_patterns(3, 2).unwrap();
        let t = Tree::parse_newick("(((a,b),c),(d,e));").unwrap();
        let leaves = t.leaves();
        for &a in &leaves {
            for &b in &leaves {
                for &c in &leaves {
                    if a == b || b == c || a == c {
                        continue;
                    }
                    let m = match_pattern(&t, &[a, b, c]).unwrap();
                    let hits = patterns.iter().filter(|p| p.key() == m.key()).count();
                    assert_eq!(hits, 1);
                }
            }
        }
    }

    #[test]
    fn compiler_equivalence_small() {
        // match_pattern(T, a) = p  <=>  compiled brackets of p hold on (T, a),
        // exhaustively for k = 3 over all 4-leaf binary trees.
        let patterns = enumerate_patterns(3, 2).unwrap();
        let compiled: Vec<_> = patterns.iter().map(compile_to_brackets).collect();
        let shapes = enumerate_shapes(4, 2);
        let names = ["a", "b", "c", "d"];
        for shape in &shapes {
            for perm in permutations(4) {
                let labels: Vec<(NodeId, String)> = shape
                    .leaves()
                    .into_iter()
                    .zip(&perm)
                    .map(|(v, &i)| (v, names[i].to_string()))
                    .collect();
                let t = shape.relabeled(&labels).unwrap();
                let leaves = t.leaves();
                for sel in permutations(4) {
                    let asg = [leaves[sel[0]], leaves[sel[1]], leaves[sel[2]]];
                    let matched = match_pattern(&t, &asg).unwrap().key();
                    for (p, preds) in patterns.iter().zip(&compiled) {
                        let holds = eval_brackets(preds, &t, &asg).unwrap();
                        assert_eq!(holds, p.key() == matched, "pattern {}", p.key());
                    }
                }
            }
        }
    }

    #[test]
    fn compiler_equivalence_ternary() {
        // Patterns with up to 3 children against all ternary trees with 4
        // leaves: the normalized child ranks of the triple splits must pin
        // down the pattern exactly.
        for k in [3usize, 4] {
            let patterns = enumerate_patterns(k, 3).unwrap();
            let compiled: Vec<_> = patterns.iter().map(compile_to_brackets).collect();
            let names = ["a", "b", "c", "d"];
            for shape in enumerate_shapes(4, 3) {
                for perm in permutations(4) {
                    let labels: Vec<(NodeId, String)> = shape
                        .leaves()
                        .into_iter()
                        .zip(&perm)
                        .map(|(v, &i)| (v, names[i].to_string()))
                        .collect();
                    let t = shape.relabeled(&labels).unwrap();
                    let leaves = t.leaves();
                    for sel in permutations(4) {
                        let asg: Vec<NodeId> =
                            sel[..k].iter().map(|&i| leaves[i]).collect();
                        let matched = match_pattern(&t, &asg).unwrap().key();
                        for (p, preds) in patterns.iter().zip(&compiled) {
                            let holds = eval_brackets(preds, &t, &asg).unwrap();
                            assert_eq!(
                                holds,
                                p.key() == matched,
                                "pattern {} on {}",
                                p.key(),
                                t.canonical_string()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn registry_round_trip() {
        let mut reg = PayoffRegistry::new();
        reg.insert(triplet_payoff());
        let text = reg.to_text();
        let back = PayoffRegistry::parse(&text).unwrap();
        let f = back.get("triplet").unwrap();
        assert_eq!(f.arity(), 3);
        assert_eq!(f.table_len(), 4);
        assert_eq!(back.to_text(), text);
        assert!(PayoffRegistry::parse("((x1,x2),x3) 1\n").is_err());
    }
}
