//! Property tests for the structural invariants that hold on arbitrary
//! trees, plus cross-module dominance checks.

use phylocsp::assign::{sample_solution, BiasedMeasure};
use phylocsp::csp::{brute_force_opt, gen_random_instance, opt_given_order, value};
use phylocsp::pattern::permutations;
use phylocsp::problems::triplet_payoff;
use phylocsp::tree::{leaf_order, NodeId, Tree};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic tree from a byte recipe: bytes drive the left-subtree
/// sizes of a recursive split, so proptest can shrink it.
fn tree_from_recipe(n: usize, bytes: &[u8]) -> Tree {
    fn rec(lo: usize, hi: usize, bytes: &[u8], next: &mut usize) -> Tree {
        let count = hi - lo;
        if count == 1 {
            return Tree::leaf(format!("v{lo}"));
        }
        let b = bytes.get(*next).copied().unwrap_or(1) as usize;
        *next += 1;
        let left = 1 + b % (count - 1);
        Tree::binary(
            rec(lo, lo + left, bytes, next),
            rec(lo + left, hi, bytes, next),
        )
    }
    let mut next = 0;
    rec(0, n, bytes, &mut next)
}

prop_compose! {
    fn arb_tree()(n in 2usize..9, bytes in proptest::collection::vec(any::<u8>(), 16)) -> Tree {
        tree_from_recipe(n, &bytes)
    }
}

proptest! {
    #[test]
    fn newick_round_trips(tree in arb_tree()) {
        let text = tree.to_newick();
        let back = Tree::parse_newick(&text).unwrap();
        prop_assert_eq!(back.to_newick(), text);
    }

    #[test]
    fn restrict_idempotent_and_order_preserving(tree in arb_tree(), mask in any::<u16>()) {
        let leaves = tree.leaves();
        let keep: Vec<NodeId> = leaves
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << (i % 16)) != 0)
            .map(|(_, &l)| l)
            .collect();
        prop_assume!(!keep.is_empty());
        let r = tree.restrict(&keep).unwrap();
        let again = r.restrict(&r.leaves()).unwrap();
        prop_assert_eq!(r.canonical_string(), again.canonical_string());

        let kept_labels: Vec<String> = leaves
            .iter()
            .filter(|l| keep.contains(l))
            .map(|&l| tree.label(l).unwrap().to_string())
            .collect();
        prop_assert_eq!(leaf_order(&r).unwrap(), kept_labels);
    }

    #[test]
    fn lca_grows_with_the_set(tree in arb_tree(), picks in proptest::collection::vec(any::<u8>(), 3)) {
        let leaves = tree.leaves();
        let a = leaves[picks[0] as usize % leaves.len()];
        let b = leaves[picks[1] as usize % leaves.len()];
        let x = leaves[picks[2] as usize % leaves.len()];
        let small = tree.lca(&[a, b]).unwrap();
        let big = tree.lca(&[a, b, x]).unwrap();
        prop_assert!(tree.is_ancestor_or_equal(big, small));
    }
}

#[test]
fn brute_force_dominates_sampled_solutions() {
    let inst = gen_random_instance(5, 7, &triplet_payoff(), 31).unwrap();
    let (opt, _) = brute_force_opt(&inst).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mean = 0.0;
    let trials = 200;
    for _ in 0..trials {
        let sol =
            sample_solution(&BiasedMeasure::uniform_splitting(), inst.vars(), &mut rng).unwrap();
        let v = value(&sol, &inst).unwrap();
        assert!(v <= opt + 1e-12);
        mean += v;
    }
    mean /= trials as f64;
    assert!(
        mean <= opt + 1e-12,
        "sampled mean {mean} above optimum {opt}"
    );
}

#[test]
fn order_constrained_never_beats_unconstrained() {
    let inst = gen_random_instance(5, 9, &triplet_payoff(), 17).unwrap();
    let (opt, _) = brute_force_opt(&inst).unwrap();
    for perm in permutations(5).into_iter().step_by(7) {
        let order: Vec<String> = perm.iter().map(|&i| inst.vars()[i].clone()).collect();
        let (v, sol) = opt_given_order(&inst, &order).unwrap();
        assert!(v <= opt + 1e-12);
        assert_eq!(sol.order(), order);
    }
}
