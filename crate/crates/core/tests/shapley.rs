//! Attribution engines against brute-force Shapley values and the axioms.

use lottery_core::attribution::{
    exact_shapley, kernel_shap, linear_shap, tree_shap, BackgroundSet, Coalition, KernelOptions,
};
use lottery_core::models::{Aggregation, LinearKind, LinearModel, Node, TreeEnsemble};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tree whose internal covers equal the sum of their children's.
fn random_tree(rng: &mut ChaCha8Rng, features: &[usize], depth: usize) -> Node {
    if depth == 0 || rng.random_bool(0.2) {
        return Node::Leaf {
            value: rng.random_range(-2.0..2.0),
            cover: rng.random_range(1..20) as f64,
        };
    }
    let left = random_tree(rng, features, depth - 1);
    let right = random_tree(rng, features, depth - 1);
    Node::Internal {
        feature: features[rng.random_range(0..features.len())],
        threshold: rng.random_range(-1.0..1.0),
        cover: left.cover() + right.cover(),
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn random_ensemble(rng: &mut ChaCha8Rng, d: usize, features: &[usize]) -> TreeEnsemble {
    let n_trees = rng.random_range(1..=3);
    let trees = (0..n_trees)
        .map(|_| {
            let depth = rng.random_range(1..=4);
            random_tree(rng, features, depth)
        })
        .collect();
    let aggregation = if rng.random_bool(0.5) { Aggregation::Sum } else { Aggregation::Mean };
    TreeEnsemble::new(trees, rng.random_range(-1.0..1.0), aggregation, d).unwrap()
}

fn random_x(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// Path-dependent conditional expectation: features outside the coalition
/// average their subtrees by training cover.
fn oracle_value(node: &Node, x: &[f64], s: Coalition) -> f64 {
    match node {
        Node::Leaf { value, .. } => *value,
        Node::Internal {
            feature,
            threshold,
            cover,
            left,
            right,
        } => {
            if s.contains(*feature) {
                if x[*feature] <= *threshold {
                    oracle_value(left, x, s)
                } else {
                    oracle_value(right, x, s)
                }
            } else {
                (left.cover() * oracle_value(left, x, s) + right.cover() * oracle_value(right, x, s)) / cover
            }
        }
    }
}

fn oracle_ensemble(e: &TreeEnsemble, x: &[f64], s: Coalition) -> f64 {
    let total: f64 = e.trees.iter().map(|t| oracle_value(t, x, s)).sum();
    match e.aggregation {
        Aggregation::Sum => e.base_score + total,
        // Bagged ensembles average their trees and carry no base score.
        Aggregation::Mean => total / e.trees.len() as f64,
    }
}

fn random_linear(rng: &mut ChaCha8Rng, d: usize) -> LinearModel {
    LinearModel {
        kind: LinearKind::Logistic,
        weights: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        bias: rng.random_range(-1.0..1.0),
        feature_means: (0..d).map(|_| rng.random_range(-0.5..0.5)).collect(),
        converged: true,
        iterations: 0,
    }
}

fn linear_value(m: &LinearModel, x: &[f64], s: Coalition) -> f64 {
    let z: Vec<f64> = (0..x.len()).map(|j| if s.contains(j) { x[j] } else { m.feature_means[j] }).collect();
    m.margin(&z)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn tree_shap_equals_brute_force_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let d = rng.random_range(1..=10);
        let features: Vec<usize> = (0..d).collect();
        let e = random_ensemble(&mut rng, d, &features);
        let x = random_x(&mut rng, d);
        let fast = tree_shap(&e, &x).unwrap();
        let brute = exact_shapley(|s| oracle_ensemble(&e, &x, s), d).unwrap();
        assert!(max_diff(&fast.phi, &brute.phi) <= 1e-9, "d={d}: {:?} vs {:?}", fast.phi, brute.phi);
        assert!((fast.baseline - brute.baseline).abs() <= 1e-9);
    }
}

#[test]
fn linear_shap_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let d = rng.random_range(1..=8);
        let m = random_linear(&mut rng, d);
        let x = random_x(&mut rng, d);
        let closed = linear_shap(&m, &x).unwrap();
        let brute = exact_shapley(|s| linear_value(&m, &x, s), d).unwrap();
        assert!(max_diff(&closed.phi, &brute.phi) <= 1e-9);
    }
}

#[test]
fn ensemble_attribution_is_sum_of_tree_attributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let d = 5;
        let features: Vec<usize> = (0..d).collect();
        let trees: Vec<Node> = (0..4).map(|_| random_tree(&mut rng, &features, 3)).collect();
        let x = random_x(&mut rng, d);
        let whole = tree_shap(&TreeEnsemble::new(trees.clone(), 0.0, Aggregation::Sum, d).unwrap(), &x).unwrap();
        let mut parts = vec![0.0; d];
        for t in trees {
            let single = tree_shap(&TreeEnsemble::new(vec![t], 0.0, Aggregation::Sum, d).unwrap(), &x).unwrap();
            parts.iter_mut().zip(&single.phi).for_each(|(p, v)| *p += v);
        }
        assert!(max_diff(&whole.phi, &parts) <= 1e-9);
    }
}

#[test]
fn product_tree_attribution_depends_on_partner_feature() {
    // Depth-2 tree realizing sign(x0) * sign(x1).
    let leaf = |v: f64| Box::new(Node::Leaf { value: v, cover: 1.0 });
    let split1 = |a: f64, b: f64| {
        Box::new(Node::Internal {
            feature: 1,
            threshold: 0.0,
            cover: 2.0,
            left: leaf(a),
            right: leaf(b),
        })
    };
    let root = Node::Internal {
        feature: 0,
        threshold: 0.0,
        cover: 4.0,
        left: split1(1.0, -1.0),
        right: split1(-1.0, 1.0),
    };
    let e = TreeEnsemble::new(vec![root], 0.0, Aggregation::Sum, 2).unwrap();
    let lo = tree_shap(&e, &[1.0, -1.0]).unwrap();
    let hi = tree_shap(&e, &[1.0, 1.0]).unwrap();
    assert!((lo.phi[0] - hi.phi[0]).abs() > 1e-3);
}

#[test]
fn tree_shap_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = random_ensemble(&mut rng, 6, &[0, 1, 2, 3, 4, 5]);
    let x = random_x(&mut rng, 6);
    let first = tree_shap(&e, &x).unwrap();
    for _ in 0..10 {
        assert_eq!(tree_shap(&e, &x).unwrap(), first);
    }
}

/// Tree symmetric under swapping features 0 and 1: root on x0, both children
/// on x1 at the same threshold, leaf values symmetric in the two branch
/// choices, and product-form covers so that the branch weights of x1 do not
/// depend on the x0 branch.
fn symmetric_tree(rng: &mut ChaCha8Rng) -> (Node, f64) {
    let t = rng.random_range(-0.5..0.5);
    let w = [rng.random_range(1..10) as f64, rng.random_range(1..10) as f64];
    let same_lo = rng.random_range(-2.0..2.0);
    let same_hi = rng.random_range(-2.0..2.0);
    let mixed = rng.random_range(-2.0..2.0);
    let leaf = |value: f64, cover: f64| Box::new(Node::Leaf { value, cover });
    let inner = |a: usize, l: f64, r: f64| {
        Box::new(Node::Internal {
            feature: 1,
            threshold: t,
            cover: w[a] * (w[0] + w[1]),
            left: leaf(l, w[a] * w[0]),
            right: leaf(r, w[a] * w[1]),
        })
    };
    let left = inner(0, same_lo, mixed);
    let right = inner(1, mixed, same_hi);
    let cover = left.cover() + right.cover();
    (
        Node::Internal {
            feature: 0,
            threshold: t,
            cover,
            left,
            right,
        },
        t,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn efficiency_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..=8);
        let features: Vec<usize> = (0..d).collect();
        let e = random_ensemble(&mut rng, d, &features);
        let x = random_x(&mut rng, d);
        let tree = tree_shap(&e, &x).unwrap();
        prop_assert!(tree.efficiency_gap() <= 1e-9);
        prop_assert!((tree.explained_value - e.margin(&x)).abs() <= 1e-9);

        let m = random_linear(&mut rng, d);
        let lin = linear_shap(&m, &x).unwrap();
        prop_assert!(lin.efficiency_gap() <= 1e-9);

        let bg = BackgroundSet::from_rows((0..10 * d).map(|_| rng.random_range(-1.0..1.0)).collect(), d).unwrap();
        let opts = KernelOptions { n_samples: 64, seed, ..KernelOptions::default() };
        let kern = kernel_shap(|z| e.margin(z), &x, &bg, &opts).unwrap();
        prop_assert!(kern.efficiency_gap() <= 1e-9);
    }

    #[test]
    fn unused_feature_gets_zero(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..=8);
        let dummy = rng.random_range(0..d);
        let used: Vec<usize> = (0..d).filter(|&j| j != dummy).collect();
        let e = random_ensemble(&mut rng, d, &used);
        let x = random_x(&mut rng, d);
        prop_assert_eq!(tree_shap(&e, &x).unwrap().phi[dummy], 0.0);

        let mut m = random_linear(&mut rng, d);
        m.weights[dummy] = 0.0;
        prop_assert_eq!(linear_shap(&m, &x).unwrap().phi[dummy], 0.0);
    }

    #[test]
    fn exchangeable_features_share_credit(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tree, t) = symmetric_tree(&mut rng);
        let e = TreeEnsemble::new(vec![tree], 0.0, Aggregation::Sum, 3).unwrap();
        let v = t + rng.random_range(-1.0..1.0);
        let phi = tree_shap(&e, &[v, v, 0.3]).unwrap().phi;
        prop_assert!((phi[0] - phi[1]).abs() <= 1e-9);

        let mut m = random_linear(&mut rng, 3);
        m.weights[1] = m.weights[0];
        m.feature_means[1] = m.feature_means[0];
        let phi = linear_shap(&m, &[v, v, 0.3]).unwrap().phi;
        prop_assert!((phi[0] - phi[1]).abs() <= 1e-9);
    }
}

#[test]
fn kernel_dummy_feature_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..10 {
        let d = 8;
        let mut m = random_linear(&mut rng, d);
        m.weights[3] = 0.0;
        let bg = BackgroundSet::from_rows((0..50 * d).map(|_| rng.random_range(-1.0..1.0)).collect(), d).unwrap();
        let x = random_x(&mut rng, d);
        let opts = KernelOptions { seed: case, ..KernelOptions::default() };
        let phi = kernel_shap(|z| m.margin(z), &x, &bg, &opts).unwrap().phi;
        assert!(phi[3].abs() <= 0.02, "{}", phi[3]);
    }
}
