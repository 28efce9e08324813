use super::linear::sigmoid;
use super::tree::{grow_tree, Aggregation, GrowInput, GrowParams, Node, TreeEnsemble};
use crate::data::Dataset;
use crate::rng;
use crate::{Error, Result};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

/// Probabilities are clipped to this distance from 0 and 1 before taking log-odds.
pub const PROBA_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_leaf: f64,
    /// Fraction of rows drawn (without replacement) for each round.
    pub row_subsample: f64,
    pub min_child_weight: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            l2_leaf: 1.0,
            row_subsample: 1.0,
            min_child_weight: 1.0,
        }
    }
}

pub(crate) fn log_odds(p: f64) -> f64 {
    let p = p.clamp(PROBA_CLIP, 1.0 - PROBA_CLIP);
    (p / (1.0 - p)).ln()
}

/// Newton-boosted regression trees on the logistic loss.
///
/// Each round fits a tree to gradient `p - y` and Hessian `p (1 - p)`; leaves
/// take `-learning_rate * G / (H + l2_leaf)`. With `row_subsample == 1.0` the
/// procedure draws no random numbers and the result is independent of `seed`.
pub fn train_gbt(train: &Dataset, config: &GbtConfig, seed: u64) -> Result<TreeEnsemble> {
    if !(config.row_subsample > 0.0 && config.row_subsample <= 1.0) {
        return Err(Error::invalid("row_subsample must lie in (0, 1]"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::invalid("learning_rate must be positive"));
    }
    if config.l2_leaf < 0.0 || config.n_rounds == 0 || config.max_depth == 0 {
        return Err(Error::invalid("need l2_leaf >= 0, n_rounds >= 1, max_depth >= 1"));
    }
    let n = train.n_rows();
    let base_score = log_odds(train.positive_rate());
    if train.is_degenerate() {
        let leaf = Node::Leaf {
            value: 0.0,
            cover: n as f64,
        };
        return TreeEnsemble::new(vec![leaf], base_score, Aggregation::Sum, train.n_features());
    }

    let params = GrowParams {
        max_depth: config.max_depth,
        min_leaf: 1.0,
        min_child_hess: config.min_child_weight,
        l2: config.l2_leaf,
        feature_subsample: 1.0,
    };
    let labels: Vec<f64> = train.labels().iter().map(|&y| f64::from(y)).collect();
    let mut margin = vec![base_score; n];
    let mut target = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut weight = vec![1.0; n];
    let n_sub = ((config.row_subsample * n as f64).floor() as usize).max(1);
    let mut trees = Vec::with_capacity(config.n_rounds);
    for round in 0..config.n_rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            target[i] = labels[i] - p;
            hess[i] = p * (1.0 - p);
        }
        if n_sub < n {
            weight.iter_mut().for_each(|w| *w = 0.0);
            let mut rng = rng::substream(seed, round as u64);
            for i in sample(&mut rng, n, n_sub) {
                weight[i] = 1.0;
            }
        }
        let input = GrowInput {
            data: train,
            target: &target,
            hess: &hess,
            weight: &weight,
        };
        let mut tree = grow_tree(&input, &params, None);
        shrink(&mut tree, config.learning_rate);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict(train.row(i));
        }
        trees.push(tree);
    }
    TreeEnsemble::new(trees, base_score, Aggregation::Sum, train.n_features())
}

fn shrink(node: &mut Node, rate: f64) {
    match node {
        Node::Leaf { value, .. } => *value *= rate,
        Node::Internal { left, right, .. } => {
            shrink(left, rate);
            shrink(right, rate);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split, SplitSpec, SyntheticSpec};
    use crate::models::linear::{train_logistic, LogisticConfig};

    fn accuracy(test: &Dataset, f: impl Fn(&[f64]) -> bool) -> f64 {
        let ok = test.rows().zip(test.labels()).filter(|(x, &y)| f(x) == (y == 1)).count();
        ok as f64 / test.n_rows() as f64
    }

    #[test]
    fn constant_labels_leave_only_base_score() {
        let ds = Dataset::new("c", vec!["x".into()], vec![0.0, 1.0, 2.0], vec![0, 0, 0]).unwrap();
        let m = train_gbt(&ds, &GbtConfig::default(), 1).unwrap();
        assert!(m.trees.iter().flat_map(|t| t.leaves()).all(|(v, _)| v == 0.0));
        assert_eq!(m.base_score, log_odds(0.0));
    }

    #[test]
    fn xor_separates_trees_from_linear() {
        let spec = SyntheticSpec::additive(vec![0.0; 6], 0.0).with_interaction(0, 1, 1.0);
        let ds = generate_synthetic(&spec, 2000, 3).unwrap();
        let (train, test) = split(&ds, &SplitSpec::new(3, 0.8)).unwrap();
        let gbt = train_gbt(&train, &GbtConfig::default(), 3).unwrap();
        let lin = train_logistic(&train, &LogisticConfig::default()).unwrap();
        let gbt_acc = accuracy(&test, |x| gbt.margin(x) >= 0.0);
        let lin_acc = accuracy(&test, |x| lin.margin(x) >= 0.0);
        assert!(gbt_acc >= 0.9, "gbt {gbt_acc}");
        assert!(lin_acc <= 0.6, "linear {lin_acc}");
    }

    #[test]
    fn full_rows_ignore_seed() {
        let spec = SyntheticSpec::additive(vec![1.0, 0.0, 0.0], 0.5).with_interaction(0, 1, 1.0);
        let ds = generate_synthetic(&spec, 300, 4).unwrap();
        let cfg = GbtConfig::default();
        assert_eq!(train_gbt(&ds, &cfg, 42).unwrap(), train_gbt(&ds, &cfg, 123).unwrap());
        let sub = GbtConfig { row_subsample: 0.7, ..cfg };
        assert_ne!(train_gbt(&ds, &sub, 42).unwrap(), train_gbt(&ds, &sub, 123).unwrap());
        assert_eq!(train_gbt(&ds, &sub, 42).unwrap(), train_gbt(&ds, &sub, 42).unwrap());
    }

    #[test]
    fn invalid_fractions_rejected() {
        let ds = Dataset::new("c", vec!["x".into()], vec![0.0, 1.0], vec![0, 1]).unwrap();
        for bad in [0.0, 1.5, f64::NAN] {
            let cfg = GbtConfig { row_subsample: bad, ..Default::default() };
            assert!(train_gbt(&ds, &cfg, 0).is_err());
        }
    }

    #[test]
    fn margin_is_base_plus_tree_sum() {
        let spec = SyntheticSpec::additive(vec![1.0, -1.0], 0.3);
        let ds = generate_synthetic(&spec, 200, 5).unwrap();
        let cfg = GbtConfig { n_rounds: 10, ..Default::default() };
        let m = train_gbt(&ds, &cfg, 0).unwrap();
        for x in ds.rows().take(20) {
            let manual = m.base_score + m.trees.iter().map(|t| t.predict(x)).sum::<f64>();
            assert_eq!(m.margin(x), manual);
        }
    }
}
