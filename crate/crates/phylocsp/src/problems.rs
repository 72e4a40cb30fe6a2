//! Concrete problem suite: triplet and quartet consistency, the weighted
//! triplet variant used in hardness transfers, split-one payoffs, Aho's
//! BUILD algorithm, caterpillar embeddings, and the triplets-to-quartets
//! reduction.

use crate::csp::{Instance, Solution};
use crate::pattern::{permutations, Pattern, PayoffFunction, PayoffRegistry};
use crate::tree::{build_caterpillar, NodeId, Side, Tree};
use crate::{invalid, Error, Result};
use std::collections::{BTreeMap, BTreeSet};

/// Rooted triplet `ab|c`: a and b are closer to each other than to c.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletConstraint {
    pub a: String,
    pub b: String,
    pub c: String,
}

impl TripletConstraint {
    pub fn new(a: impl Into<String>, b: impl Into<String>, c: impl Into<String>) -> Self {
        TripletConstraint {
            a: a.into(),
            b: b.into(),
            c: c.into(),
        }
    }
}

/// Unrooted quartet `ab|cd`: the a-b path avoids the c-d path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuartetConstraint {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
    /// Set when `d` is the distinguished rooting leaf of a reduced
    /// triplet instance.
    pub rooted_at_d: bool,
}

impl QuartetConstraint {
    pub fn new(
        a: impl Into<String>,
        b: impl Into<String>,
        c: impl Into<String>,
        d: impl Into<String>,
    ) -> Self {
        QuartetConstraint {
            a: a.into(),
            b: b.into(),
            c: c.into(),
            d: d.into(),
            rooted_at_d: false,
        }
    }
}

/// The triplet consistency payoff: 1 on the four ordered patterns where
/// x3 separates before x1 and x2, 0 elsewhere.
pub fn triplet_payoff() -> PayoffFunction {
    let base = Pattern::parse("((x1,x2),x3)").unwrap();
    PayoffFunction::new("triplet", 3, [(base, 1.0)], 0.0)
        .unwrap()
        .close_under_child_swaps()
        .unwrap()
}

/// Ordered-pair payoff: 1 iff x1 precedes x2. The smallest nontrivial
/// satisfiable payoff, handy for arity-2 gap instances.
pub fn pair_payoff() -> PayoffFunction {
    let p = Pattern::parse("(x1,x2)").unwrap();
    PayoffFunction::new("pair", 2, [(p, 1.0)], 0.0).unwrap()
}

/// Weighted triplet payoff: full payoff only in the slot order x1,x2,x3;
/// the other three triplet-satisfying patterns score 1-delta.
pub fn fstar_payoff(delta: f64) -> Result<PayoffFunction> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must be in (0,1), got {delta}"));
    }
    let entries = vec![
        (Pattern::parse("((x1,x2),x3)")?, 1.0),
        (Pattern::parse("((x2,x1),x3)")?, 1.0 - delta),
        (Pattern::parse("(x3,(x1,x2))")?, 1.0 - delta),
        (Pattern::parse("(x3,(x2,x1))")?, 1.0 - delta),
    ];
    PayoffFunction::new("fstar", 3, entries, 0.0)
}

fn caterpillar_shape(k: usize, side: Side) -> Tree {
    let t = build_caterpillar(k, side).unwrap();
    shape_of(&t, t.root())
}

/// The unlabeled shape of a tree.
fn shape_of(t: &Tree, v: NodeId) -> Tree {
    if t.is_leaf(v) {
        Tree::unlabeled_leaf()
    } else {
        Tree::node(t.children(v).iter().map(|&c| shape_of(t, c)).collect())
    }
}

/// Split-one-to-the-right payoff on `k` variables: 1 iff at every effective
/// split of three or more variables exactly one goes to the right subtree,
/// i.e. the matched shape is the left caterpillar, in any variable order.
pub fn split_one_right_payoff(k: usize) -> Result<PayoffFunction> {
    split_payoff(k, Side::Left, format!("split-right-{k}"))
}

/// Mirror image of [`split_one_right_payoff`].
pub fn split_one_left_payoff(k: usize) -> Result<PayoffFunction> {
    split_payoff(k, Side::Right, format!("split-left-{k}"))
}

fn split_payoff(k: usize, side: Side, name: String) -> Result<PayoffFunction> {
    if !(2..=8).contains(&k) {
        return invalid("split payoff arity must be in 2..=8");
    }
    let shape = caterpillar_shape(k, side);
    let entries: Vec<(Pattern, f64)> = permutations(k)
        .into_iter()
        .map(|perm| {
            let slots: Vec<usize> = perm.iter().map(|&i| i + 1).collect();
            Pattern::from_shape(&shape, &slots).map(|p| (p, 1.0))
        })
        .collect::<Result<_>>()?;
    PayoffFunction::new(name, k, entries, 0.0)
}

/// Quartet consistency payoff on rooted surrogates: 1 iff the tree satisfies
/// x1 x2 | x3 x4.
pub fn quartet_payoff() -> PayoffFunction {
    let entries: Vec<(Pattern, f64)> = crate::pattern::enumerate_patterns(4, 2)
        .unwrap()
        .into_iter()
        .filter(|p| {
            let t = p.tree();
            let q = QuartetConstraint::new("x1", "x2", "x3", "x4");
            quartet_satisfied(t, &q).unwrap()
        })
        .map(|p| (p, 1.0))
        .collect();
    PayoffFunction::new("quartet", 4, entries, 0.0).unwrap()
}

/// Registry of the built-in payoff functions.
pub fn builtin_registry() -> PayoffRegistry {
    let mut reg = PayoffRegistry::new();
    reg.insert(pair_payoff());
    reg.insert(triplet_payoff());
    reg.insert(quartet_payoff());
    reg.insert(fstar_payoff(0.1).unwrap());
    reg.insert(split_one_right_payoff(4).unwrap());
    reg.insert(split_one_right_payoff(6).unwrap());
    reg.insert(split_one_left_payoff(6).unwrap());
    reg
}

/// Resolves a payoff by name: first against `extra` (when given), then the
/// built-ins, then the parametric families `split-right-K`, `split-left-K`
/// and `fstar:DELTA`.
pub fn resolve_payoff(name: &str, extra: Option<&PayoffRegistry>) -> Result<PayoffFunction> {
    if let Some(reg) = extra {
        if reg.contains(name) {
            return reg.get(name).cloned();
        }
    }
    let builtins = builtin_registry();
    if builtins.contains(name) {
        return builtins.get(name).cloned();
    }
    if let Some(k) = name
        .strip_prefix("split-right-")
        .and_then(|s| s.parse().ok())
    {
        return split_one_right_payoff(k);
    }
    if let Some(k) = name
        .strip_prefix("split-left-")
        .and_then(|s| s.parse().ok())
    {
        return split_one_left_payoff(k);
    }
    if let Some(d) = name.strip_prefix("fstar:").and_then(|s| s.parse().ok()) {
        return fstar_payoff(d);
    }
    Err(Error::NotFound(format!("payoff function {name}")))
}

/// True iff `tree` satisfies the rooted triplet ab|c: the LCA of a,b is a
/// proper descendant of the LCA of all three.
pub fn triplet_satisfied(tree: &Tree, t: &TripletConstraint) -> Result<bool> {
    let ab = tree.lca_of_labels(&[&t.a, &t.b])?;
    let abc = tree.lca_of_labels(&[&t.a, &t.b, &t.c])?;
    Ok(tree.depth(ab) > tree.depth(abc))
}

/// True iff the rooted surrogate satisfies the unrooted quartet ab|cd.
///
/// Equivalent to path-disjointness of a-b and c-d in the unrooted tree: the
/// pair paths are disjoint iff one pair's LCA subtree is free of the other
/// pair.
pub fn quartet_satisfied(tree: &Tree, q: &QuartetConstraint) -> Result<bool> {
    let ids: Vec<NodeId> = [&q.a, &q.b, &q.c, &q.d]
        .iter()
        .map(|l| {
            tree.find_leaf(l)
                .ok_or_else(|| Error::NotFound(format!("leaf {l}")))
        })
        .collect::<Result<_>>()?;
    let (a, b, c, d) = (ids[0], ids[1], ids[2], ids[3]);
    if ids.iter().collect::<BTreeSet<_>>().len() != 4 {
        return invalid("quartet leaves must be distinct");
    }
    let ab = tree.lca(&[a, b])?;
    let cd = tree.lca(&[c, d])?;
    let ab_clear = !tree.is_ancestor_or_equal(ab, c) && !tree.is_ancestor_or_equal(ab, d);
    let cd_clear = !tree.is_ancestor_or_equal(cd, a) && !tree.is_ancestor_or_equal(cd, b);
    Ok(ab_clear || cd_clear)
}

/// Result of Aho's BUILD: either a tree consistent with every input triplet
/// or a report that the triplets conflict.
#[derive(Debug, Clone)]
pub enum BuildOutcome {
    Consistent(Tree),
    Inconsistent,
}

/// Aho's BUILD algorithm. Recursively partitions the label set by the graph
/// with an edge {a,b} per triplet ab|c fully contained in the current set.
/// A connected graph on more than one label is a conflict. Components are
/// ordered by their smallest label and joined as a left caterpillar of
/// subtrees.
pub fn aho_build(triplets: &[TripletConstraint], labels: &[String]) -> Result<BuildOutcome> {
    if labels.is_empty() {
        return invalid("aho_build needs at least one label");
    }
    let set: BTreeSet<String> = labels.iter().cloned().collect();
    if set.len() != labels.len() {
        return invalid("labels must be distinct");
    }
    Ok(build_rec(triplets, &set))
}

fn build_rec(triplets: &[TripletConstraint], labels: &BTreeSet<String>) -> BuildOutcome {
    if labels.len() == 1 {
        return BuildOutcome::Consistent(Tree::leaf(labels.iter().next().unwrap().clone()));
    }
    // Union-find over the current label set.
    let index: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut parent: Vec<usize> = (0..labels.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for t in triplets {
        if let (Some(&a), Some(&b), Some(_)) = (
            index.get(t.a.as_str()),
            index.get(t.b.as_str()),
            index.get(t.c.as_str()),
        ) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    let mut components: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (label, &i) in &index {
        components
            .entry(find(&mut parent, i))
            .or_default()
            .insert(label.to_string());
    }
    if components.len() == 1 {
        return BuildOutcome::Inconsistent;
    }
    // Sort components by smallest label; BTreeSet iteration gives it directly.
    let mut comps: Vec<BTreeSet<String>> = components.into_values().collect();
    comps.sort_by(|x, y| x.iter().next().cmp(&y.iter().next()));
    let mut subtrees = Vec::new();
    for comp in comps {
        match build_rec(triplets, &comp) {
            BuildOutcome::Consistent(t) => subtrees.push(t),
            BuildOutcome::Inconsistent => return BuildOutcome::Inconsistent,
        }
    }
    let mut iter = subtrees.into_iter();
    let mut acc = iter.next().unwrap();
    for next in iter {
        acc = Tree::binary(acc, next);
    }
    BuildOutcome::Consistent(acc)
}

/// Embeds an ordering as a left caterpillar: variable at position `p` of
/// `pi` goes to leaf `p+1`. The solution's leaf order is exactly `pi`.
pub fn caterpillar_embed(pi: &[String]) -> Result<Solution> {
    if pi.is_empty() {
        return invalid("caterpillar_embed needs at least one variable");
    }
    let tree = build_caterpillar(pi.len(), Side::Left)?;
    let labels: Vec<(NodeId, String)> = tree.leaves().into_iter().zip(pi.iter().cloned()).collect();
    Solution::from_leaf_labels(&tree.relabeled(&labels)?)
}

/// Rewrites a triplet instance over V as a quartet instance over V + {gamma}:
/// each ab|c becomes ab|c gamma with the same weight. Returns the fresh
/// gamma symbol.
pub fn triplets_to_quartets(inst: &Instance) -> Result<(Instance, String)> {
    let mut gamma = "gamma".to_string();
    let mut counter = 0;
    while inst.vars().contains(&gamma) {
        counter += 1;
        gamma = format!("gamma{counter}");
    }
    let mut vars = inst.vars().to_vec();
    vars.push(gamma.clone());
    let mut out = Instance::new(vars)?;
    out.add_payoff(quartet_payoff());
    for c in inst.constraints() {
        let f = inst.payoff(c.payoff);
        if f.name() != "triplet" {
            return invalid(format!("expected triplet constraints, got {}", f.name()));
        }
        let names: Vec<String> = c.vars.iter().map(|&v| inst.vars()[v].clone()).collect();
        out.add_constraint(
            "quartet",
            &[&names[0], &names[1], &names[2], &gamma],
            c.weight.clone(),
        )?;
    }
    Ok((out, gamma))
}

/// Attaches the distinguished leaf to the root, producing the rooted
/// surrogate of the unrooted tree used by the reduction.
pub fn attach_gamma(tree: &Tree, gamma: &str) -> Tree {
    Tree::binary(tree.clone(), Tree::leaf(gamma))
}

/// Roots the surrogate at gamma's neighbor and drops gamma, inverting
/// [`attach_gamma`] up to canonical form.
pub fn reroot_at_gamma(surrogate: &Tree, gamma: &str) -> Result<Tree> {
    let g = surrogate
        .find_leaf(gamma)
        .ok_or_else(|| Error::NotFound(format!("leaf {gamma}")))?;
    // Unrooted edges: the surrogate root is a subdivision point, so if gamma
    // hangs off the root the other child is already the answer.
    let root = surrogate.root();
    if surrogate.parent(g) == Some(root) && surrogate.children(root).len() == 2 {
        let other = *surrogate.children(root).iter().find(|&&c| c != g).unwrap();
        return Ok(extract_subtree(surrogate, other));
    }
    // Otherwise re-hang the tree: walk from gamma's parent upward, flipping
    // parent edges into child edges. The former parent direction becomes the
    // last child at each flip; the surrogate root (degree 2) is suppressed.
    let start = surrogate.parent(g).expect("gamma is not the root");
    fn rebuild(t: &Tree, v: NodeId, from: Option<NodeId>, skip_leaf: NodeId) -> Option<Tree> {
        let mut kids: Vec<Tree> = Vec::new();
        for &c in t.children(v) {
            if Some(c) == from || c == skip_leaf {
                continue;
            }
            if let Some(sub) = rebuild(t, c, Some(v), skip_leaf) {
                kids.push(sub);
            }
        }
        if let Some(p) = t.parent(v) {
            if Some(p) != from {
                if let Some(up) = rebuild(t, p, Some(v), skip_leaf) {
                    kids.push(up);
                }
            }
        }
        if t.is_leaf(v) {
            return Some(Tree::leaf(t.label(v).expect("labeled leaf")));
        }
        match kids.len() {
            0 => None,
            1 => kids.pop(),
            _ => Some(Tree::node(kids)),
        }
    }
    rebuild(surrogate, start, None, g)
        .ok_or_else(|| Error::InvalidArgument("surrogate collapsed to nothing".into()))
}

fn extract_subtree(tree: &Tree, v: NodeId) -> Tree {
    if tree.is_leaf(v) {
        return match tree.label(v) {
            Some(l) => Tree::leaf(l),
            None => Tree::unlabeled_leaf(),
        };
    }
    Tree::node(
        tree.children(v)
            .iter()
            .map(|&c| extract_subtree(tree, c))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::value;
    use crate::pattern::enumerate_patterns;

    #[test]
    fn triplet_table_shape() {
        let f = triplet_payoff();
        assert_eq!(f.table_len(), 4);
        assert!(f.is_satisfiable());
        // Exactly 4 of the 12 ordered binary patterns score 1.
        let ones = enumerate_patterns(3, 2)
            .unwrap()
            .iter()
            .filter(|p| f.payoff_of_pattern(p) == 1.0)
            .count();
        assert_eq!(ones, 4);
    }

    #[test]
    fn triplet_symmetric_in_first_two() {
        let f = triplet_payoff();
        for p in enumerate_patterns(3, 2).unwrap() {
            // swap slots 1 and 2 in the pattern
            let swapped: Vec<usize> = p
                .slot_order()
                .iter()
                .map(|&s| match s {
                    1 => 2,
                    2 => 1,
                    s => s,
                })
                .collect();
            let shape = super::shape_of(p.tree(), p.tree().root());
            let q = Pattern::from_shape(&shape, &swapped).unwrap();
            assert_eq!(f.payoff_of_pattern(&p), f.payoff_of_pattern(&q));
        }
    }

    #[test]
    fn triplet_on_caterpillar() {
        let t = build_caterpillar(5, Side::Left).unwrap();
        assert!(triplet_satisfied(&t, &TripletConstraint::new("1", "3", "4")).unwrap());
        let t2 = Tree::parse_newick("((a,c),b);").unwrap();
        assert!(!triplet_satisfied(&t2, &TripletConstraint::new("a", "b", "c")).unwrap());
    }

    #[test]
    fn fstar_values() {
        let f = fstar_payoff(0.1).unwrap();
        assert!(f.is_satisfiable());
        assert_eq!(f.payoff_of_key("((x1,x2),x3)"), 1.0);
        assert_eq!(f.payoff_of_key("((x2,x1),x3)"), 0.9);
        assert_eq!(f.payoff_of_key("((x1,x3),x2)"), 0.0);
        assert!(fstar_payoff(0.0).is_err());
        assert!(fstar_payoff(1.0).is_err());

        // f* <= triplet pointwise on all 12 patterns.
        let t = triplet_payoff();
        for p in enumerate_patterns(3, 2).unwrap() {
            assert!(f.payoff_of_pattern(&p) <= t.payoff_of_pattern(&p));
        }
    }

    #[test]
    fn fstar_on_perfect_tree() {
        // u,v,w on leaves 1,2,3 of the depth-2 perfect binary tree scores 1.
        let f = fstar_payoff(0.1).unwrap();
        let t = crate::tree::build_perfect(2, 2).unwrap();
        let asg: Vec<NodeId> = ["1", "2", "3"]
            .iter()
            .map(|l| t.find_leaf(l).unwrap())
            .collect();
        assert_eq!(f.evaluate(&t, &asg).unwrap(), 1.0);
        // order (v,u,w): 1-delta
        let asg: Vec<NodeId> = ["2", "1", "3"]
            .iter()
            .map(|l| t.find_leaf(l).unwrap())
            .collect();
        assert_eq!(f.evaluate(&t, &asg).unwrap(), 0.9);
    }

    #[test]
    fn split_payoff_tables() {
        let f = split_one_right_payoff(4).unwrap();
        assert_eq!(f.table_len(), 24);
        assert_eq!(f.payoff_of_key("(((x1,x2),x3),x4)"), 1.0);
        assert_eq!(f.payoff_of_key("(((x3,x1),x4),x2)"), 1.0);
        assert_eq!(f.payoff_of_key("((x1,x2),(x3,x4))"), 0.0);
        let g = split_one_left_payoff(4).unwrap();
        assert_eq!(g.payoff_of_key("(x1,(x2,(x3,x4)))"), 1.0);
        assert_eq!(g.payoff_of_key("(((x1,x2),x3),x4)"), 0.0);
    }

    #[test]
    fn quartet_semantics() {
        let t = Tree::parse_newick("((lion,tiger),(tuna,whale));").unwrap();
        let q = QuartetConstraint::new("lion", "tiger", "tuna", "whale");
        assert!(quartet_satisfied(&t, &q).unwrap());

        // Exactly one of the three pairings holds on any binary restriction.
        for p in enumerate_patterns(4, 2).unwrap() {
            let t = p.tree();
            let pairings = [
                QuartetConstraint::new("x1", "x2", "x3", "x4"),
                QuartetConstraint::new("x1", "x3", "x2", "x4"),
                QuartetConstraint::new("x1", "x4", "x2", "x3"),
            ];
            let sat = pairings
                .iter()
                .filter(|q| quartet_satisfied(t, q).unwrap())
                .count();
            assert_eq!(sat, 1, "pattern {}", p.key());
        }
    }

    #[test]
    fn quartet_payoff_counts() {
        let f = quartet_payoff();
        assert_eq!(f.table_len(), 40);
        assert!(f.is_satisfiable());
    }

    #[test]
    fn aho_simple_cases() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let one = [TripletConstraint::new("a", "b", "c")];
        match aho_build(&one, &labels).unwrap() {
            BuildOutcome::Consistent(t) => {
                assert!(triplet_satisfied(&t, &one[0]).unwrap());
            }
            BuildOutcome::Inconsistent => panic!("consistent set reported inconsistent"),
        }

        let conflict = [
            TripletConstraint::new("a", "b", "c"),
            TripletConstraint::new("a", "c", "b"),
        ];
        assert!(matches!(
            aho_build(&conflict, &labels).unwrap(),
            BuildOutcome::Inconsistent
        ));
    }

    #[test]
    fn caterpillar_embed_order() {
        let pi: Vec<String> = ["b", "a", "c"].iter().map(|s| s.to_string()).collect();
        let sol = caterpillar_embed(&pi).unwrap();
        assert_eq!(sol.order(), pi);
        // triplet ba|c is satisfied under pi = (b, a, c)
        assert!(triplet_satisfied(&sol.tree, &TripletConstraint::new("b", "a", "c")).unwrap());
    }

    #[test]
    fn caterpillar_embed_scores_fstar() {
        // a caterpillar embedding satisfies the weighted triplet fully iff
        // the three variables appear in argument order
        let f = fstar_payoff(0.25).unwrap();
        let vars = ["u", "v", "w"];
        for perm in permutations(3) {
            let pi: Vec<String> = perm.iter().map(|&i| vars[i].to_string()).collect();
            let sol = caterpillar_embed(&pi).unwrap();
            let asg: Vec<NodeId> = vars
                .iter()
                .map(|v| sol.tree.find_leaf(v).unwrap())
                .collect();
            let got = f.evaluate(&sol.tree, &asg).unwrap();
            let in_order = pi == vars.map(String::from).to_vec();
            if in_order {
                assert_eq!(got, 1.0);
            } else {
                assert!(got < 1.0);
            }
        }
    }

    #[test]
    fn reduction_single_constraint() {
        let mut inst = Instance::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        inst.add_payoff(triplet_payoff());
        inst.add_constraint(
            "triplet",
            &["a", "b", "c"],
            num_rational::BigRational::from_integer(1.into()),
        )
        .unwrap();
        let (q, gamma) = triplets_to_quartets(&inst).unwrap();
        assert_eq!(gamma, "gamma");
        assert_eq!(q.constraints().len(), 1);
        assert_eq!(q.vars().len(), 4);

        // the tree ((a,b),c) satisfies ab|c; its gamma surrogate satisfies ab|c gamma
        let t = Tree::parse_newick("((a,b),c);").unwrap();
        let surrogate = attach_gamma(&t, &gamma);
        let sol = Solution::from_leaf_labels(&surrogate).unwrap();
        assert_eq!(value(&sol, &q).unwrap(), 1.0);

        // and rerooting recovers a tree with the same triplet count
        let back = reroot_at_gamma(&surrogate, &gamma).unwrap();
        assert_eq!(back.canonical_string(), t.canonical_string());
    }

    #[test]
    fn reroot_from_buried_gamma() {
        // gamma placed deep inside the surrogate: rooting at its neighbor
        // must preserve satisfied weight against the quartet instance
        let mut inst =
            Instance::new(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        inst.add_payoff(triplet_payoff());
        let one = num_rational::BigRational::from_integer(1.into());
        inst.add_constraint("triplet", &["a", "b", "c"], one.clone()).unwrap();
        inst.add_constraint("triplet", &["b", "c", "d"], one.clone()).unwrap();
        inst.add_constraint("triplet", &["a", "d", "b"], one).unwrap();
        let (quartets, gamma) = triplets_to_quartets(&inst).unwrap();

        for newick in [
            "(((gamma,a),b),(c,d));",
            "((a,(b,gamma)),(c,d));",
            "((c,d),(a,(b,gamma)));",
            "(((a,gamma),(b,c)),d);",
        ] {
            let surrogate = Tree::parse_newick(newick).unwrap();
            let sol_q = Solution::from_leaf_labels(&surrogate).unwrap();
            let v_quartets = value(&sol_q, &quartets).unwrap();
            let rooted = reroot_at_gamma(&surrogate, &gamma).unwrap();
            let sol_t = Solution::from_leaf_labels(&rooted).unwrap();
            let v_triplets = value(&sol_t, &inst).unwrap();
            assert!(
                (v_quartets - v_triplets).abs() < 1e-12,
                "{newick}: quartets {v_quartets} vs triplets {v_triplets}"
            );
        }
    }
}
