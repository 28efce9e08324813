use crate::data::Dataset;
use crate::rng::{self, ChaCha8Rng};
use crate::{Error, Result};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Binary tree node. Rows with `x[feature] <= threshold` go left.
///
/// `cover` is the (weighted) number of training rows that reached the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        cover: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Internal { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |value, cover| out.push((value, cover)));
        out
    }

    fn visit_leaves(&self, f: &mut impl FnMut(f64, f64)) {
        match self {
            Node::Leaf { value, cover } => f(*value, *cover),
            Node::Internal { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }

    /// Largest feature index used by any split.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Node::Leaf { .. } => None,
            Node::Internal {
                feature, left, right, ..
            } => Some(
                (*feature)
                    .max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
        }
    }

    /// Check covers are positive and internal covers equal the sum of their children.
    pub fn validate(&self) -> Result<()> {
        match self {
            Node::Leaf { value, cover } => {
                if !(*cover > 0.0) || !value.is_finite() {
                    return Err(Error::MalformedTree(format!(
                        "leaf with cover {cover} and value {value}"
                    )));
                }
            }
            Node::Internal {
                threshold,
                cover,
                left,
                right,
                ..
            } => {
                let children = left.cover() + right.cover();
                if !(*cover > 0.0) || (children - cover).abs() > 1e-9 * cover.max(1.0) {
                    return Err(Error::MalformedTree(format!(
                        "internal cover {cover} vs children {children}"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::MalformedTree("non-finite threshold".into()));
                }
                left.validate()?;
                right.validate()?;
            }
        }
        Ok(())
    }

    /// Cover-weighted mean of the leaf values.
    pub fn expected_value(&self) -> f64 {
        match self {
            Node::Leaf { value, .. } => *value,
            Node::Internal {
                cover, left, right, ..
            } => (left.cover() * left.expected_value() + right.cover() * right.expected_value()) / cover,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `base_score + sum of tree outputs` (boosting).
    Sum,
    /// Mean of tree outputs (bagging); `base_score` is unused.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<Node>,
    pub base_score: f64,
    pub aggregation: Aggregation,
    pub n_features: usize,
}

impl TreeEnsemble {
    pub fn new(trees: Vec<Node>, base_score: f64, aggregation: Aggregation, n_features: usize) -> Result<Self> {
        let ensemble = Self {
            trees,
            base_score,
            aggregation,
            n_features,
        };
        ensemble.validate()?;
        Ok(ensemble)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::MalformedTree("ensemble has no trees".into()));
        }
        if !self.base_score.is_finite() {
            return Err(Error::MalformedTree("non-finite base score".into()));
        }
        for tree in &self.trees {
            tree.validate()?;
            if let Some(f) = tree.max_feature() {
                if f >= self.n_features {
                    return Err(Error::MalformedTree(format!(
                        "split on feature {f} but ensemble has {} features",
                        self.n_features
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        match self.aggregation {
            Aggregation::Sum => self.base_score + total,
            Aggregation::Mean => total / self.trees.len() as f64,
        }
    }

    /// Combine per-tree quantities the same way the margin does.
    pub(crate) fn combine(&self, per_tree_sum: f64, include_base: bool) -> f64 {
        match self.aggregation {
            Aggregation::Sum => per_tree_sum + if include_base { self.base_score } else { 0.0 },
            Aggregation::Mean => per_tree_sum / self.trees.len() as f64,
        }
    }

    pub fn combine_weight(&self) -> f64 {
        match self.aggregation {
            Aggregation::Sum => 1.0,
            Aggregation::Mean => 1.0 / self.trees.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features considered at each split.
    pub feature_subsample: f64,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 1,
            feature_subsample: 0.5,
            bootstrap: true,
        }
    }
}

/// Per-row quantities driving split search. A leaf predicts
/// `sum(weight * target) / (sum(weight * hess) + l2)`.
pub(crate) struct GrowInput<'a> {
    pub data: &'a Dataset,
    pub target: &'a [f64],
    pub hess: &'a [f64],
    pub weight: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: f64,
    pub min_child_hess: f64,
    pub l2: f64,
    pub feature_subsample: f64,
}

#[derive(Clone, Copy, Default)]
struct Sums {
    g: f64,
    h: f64,
    c: f64,
}

impl Sums {
    fn add(&mut self, input: &GrowInput, row: usize) {
        let w = input.weight[row];
        self.g += w * input.target[row];
        self.h += w * input.hess[row];
        self.c += w;
    }

    fn sub(self, other: Sums) -> Sums {
        Sums {
            g: self.g - other.g,
            h: self.h - other.h,
            c: self.c - other.c,
        }
    }

    fn score(&self, l2: f64) -> f64 {
        let denom = self.h + l2;
        if denom > 0.0 {
            self.g * self.g / denom
        } else {
            0.0
        }
    }

    fn leaf_value(&self, l2: f64) -> f64 {
        let denom = self.h + l2;
        if denom > 0.0 {
            self.g / denom
        } else {
            0.0
        }
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Greedy depth-first tree growth.
///
/// Candidate splits are scanned by ascending feature index, then ascending
/// threshold, and only a strictly larger gain replaces the incumbent, so ties
/// resolve to the lowest (feature, threshold).
pub(crate) fn grow_tree(input: &GrowInput, params: &GrowParams, rng: Option<&mut ChaCha8Rng>) -> Node {
    let rows: Vec<usize> = (0..input.data.n_rows()).filter(|&r| input.weight[r] > 0.0).collect();
    let mut rng = rng;
    grow_node(input, params, rows, 0, &mut rng)
}

fn grow_node(
    input: &GrowInput,
    params: &GrowParams,
    rows: Vec<usize>,
    depth: usize,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Node {
    let mut total = Sums::default();
    for &r in &rows {
        total.add(input, r);
    }
    let leaf = Node::Leaf {
        value: total.leaf_value(params.l2),
        cover: total.c,
    };
    if depth >= params.max_depth || total.c < 2.0 * params.min_leaf {
        return leaf;
    }
    let d = input.data.n_features();
    let features: Vec<usize> = match rng.as_deref_mut() {
        Some(rng) if params.feature_subsample < 1.0 => {
            let k = ((params.feature_subsample * d as f64).round() as usize).clamp(1, d);
            let mut chosen = sample(rng, d, k).into_vec();
            chosen.sort_unstable();
            chosen
        }
        _ => (0..d).collect(),
    };
    let Some(best) = best_split(input, params, &rows, &features, total) else {
        return leaf;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| input.data.row(r)[best.feature] <= best.threshold);
    let left = grow_node(input, params, left_rows, depth + 1, rng);
    let right = grow_node(input, params, right_rows, depth + 1, rng);
    Node::Internal {
        feature: best.feature,
        threshold: best.threshold,
        cover: left.cover() + right.cover(),
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn best_split(
    input: &GrowInput,
    params: &GrowParams,
    rows: &[usize],
    features: &[usize],
    total: Sums,
) -> Option<SplitChoice> {
    let parent = total.score(params.l2);
    let mut best: Option<SplitChoice> = None;
    let mut sorted = rows.to_vec();
    for &f in features {
        let value = |r: usize| input.data.row(r)[f];
        sorted.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let mut left = Sums::default();
        for k in 0..sorted.len() - 1 {
            left.add(input, sorted[k]);
            let (lo, hi) = (value(sorted[k]), value(sorted[k + 1]));
            if lo == hi {
                continue;
            }
            let right = total.sub(left);
            if left.c < params.min_leaf || right.c < params.min_leaf {
                continue;
            }
            if left.h < params.min_child_hess || right.h < params.min_child_hess {
                continue;
            }
            let gain = left.score(params.l2) + right.score(params.l2) - parent;
            let threshold = {
                let mid = lo + (hi - lo) / 2.0;
                if mid < hi { mid } else { lo }
            };
            if gain > 1e-12 && best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn cart_params(max_depth: usize, min_leaf: usize, feature_subsample: f64) -> GrowParams {
    GrowParams {
        max_depth,
        min_leaf: min_leaf.max(1) as f64,
        min_child_hess: 0.0,
        l2: 0.0,
        feature_subsample,
    }
}

fn label_targets(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let target = data.labels().iter().map(|&y| f64::from(y)).collect();
    (target, vec![1.0; data.n_rows()])
}

/// Single variance-reduction tree over 0/1 labels; leaves hold the class-1 rate.
pub fn train_cart(train: &Dataset, config: &CartConfig) -> Result<TreeEnsemble> {
    if config.max_depth == 0 {
        return Err(Error::invalid("max_depth must be >= 1"));
    }
    let (target, hess) = label_targets(train);
    let weight = vec![1.0; train.n_rows()];
    let input = GrowInput {
        data: train,
        target: &target,
        hess: &hess,
        weight: &weight,
    };
    let tree = grow_tree(&input, &cart_params(config.max_depth, config.min_leaf, 1.0), None);
    TreeEnsemble::new(vec![tree], 0.0, Aggregation::Mean, train.n_features())
}

/// Bagged variance-reduction trees with per-split feature subsampling.
///
/// Tree `t` draws from its own sub-stream of `seed`, so trees are built in
/// parallel without affecting the result.
pub fn train_random_forest(train: &Dataset, config: &ForestConfig, seed: u64) -> Result<TreeEnsemble> {
    if config.n_trees < 1 {
        return Err(Error::invalid("n_trees must be >= 1"));
    }
    if config.max_depth == 0 {
        return Err(Error::invalid("max_depth must be >= 1"));
    }
    if !(config.feature_subsample > 0.0 && config.feature_subsample <= 1.0) {
        return Err(Error::invalid("feature_subsample must lie in (0, 1]"));
    }
    let (target, hess) = label_targets(train);
    let n = train.n_rows();
    let params = cart_params(config.max_depth, config.min_leaf, config.feature_subsample);
    let trees: Vec<Node> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::substream(seed, t as u64);
            let mut weight = vec![0.0; n];
            if config.bootstrap {
                for _ in 0..n {
                    weight[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weight.iter_mut().for_each(|w| *w = 1.0);
            }
            let input = GrowInput {
                data: train,
                target: &target,
                hess: &hess,
                weight: &weight,
            };
            grow_tree(&input, &params, Some(&mut rng))
        })
        .collect();
    TreeEnsemble::new(trees, 0.0, Aggregation::Mean, train.n_features())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split, SplitSpec, SyntheticSpec};

    fn step_data() -> Dataset {
        // 20 rows on a grid; y = 1 iff x1 > 0.5. x0 is uninformative noise.
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let x1 = i as f64 / 19.0;
            let x0 = ((i * 7) % 20) as f64 / 20.0;
            features.extend([x0, x1]);
            labels.push(u8::from(x1 > 0.5));
        }
        Dataset::new("step", vec!["x0".into(), "x1".into()], features, labels).unwrap()
    }

    #[test]
    fn constant_labels_give_single_leaf() {
        let ds = Dataset::new("c", vec!["x".into()], vec![1.0, 2.0, 3.0], vec![1, 1, 1]).unwrap();
        let m = train_cart(&ds, &CartConfig::default()).unwrap();
        assert_eq!(m.trees[0], Node::Leaf { value: 1.0, cover: 3.0 });
    }

    #[test]
    fn stump_splits_on_the_informative_feature() {
        let ds = step_data();
        let m = train_cart(&ds, &CartConfig { max_depth: 1, min_leaf: 1 }).unwrap();
        // Exhaustive scan oracle: sum of squared errors over every
        // (feature, midpoint) split, independent of the grower.
        let mut best = (f64::INFINITY, 0, 0.0);
        for f in 0..2 {
            let mut vals: Vec<f64> = ds.rows().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = (w[0] + w[1]) / 2.0;
                let sse = |side: &dyn Fn(f64) -> bool| {
                    let ys: Vec<f64> = ds
                        .rows()
                        .zip(ds.labels())
                        .filter(|(r, _)| side(r[f]))
                        .map(|(_, &y)| f64::from(y))
                        .collect();
                    let m = ys.iter().sum::<f64>() / ys.len() as f64;
                    ys.iter().map(|y| (y - m).powi(2)).sum::<f64>()
                };
                let total = sse(&|v| v <= thr) + sse(&|v| v > thr);
                if total < best.0 - 1e-12 {
                    best = (total, f, thr);
                }
            }
        }
        match &m.trees[0] {
            Node::Internal { feature, threshold, .. } => {
                assert_eq!(*feature, best.1);
                assert!((threshold - best.2).abs() < 1e-12);
                assert_eq!(*feature, 1);
                assert!((threshold - 0.5).abs() < 0.05);
            }
            leaf => panic!("expected a split, got {leaf:?}"),
        }
    }

    #[test]
    fn min_leaf_equal_to_n_gives_single_leaf() {
        let ds = step_data();
        let m = train_cart(&ds, &CartConfig { max_depth: 4, min_leaf: 20 }).unwrap();
        assert!(matches!(m.trees[0], Node::Leaf { .. }));
    }

    #[test]
    fn single_unbagged_forest_tree_equals_cart() {
        let spec = SyntheticSpec::additive(vec![1.0, 0.5, 0.0], 0.5).with_interaction(0, 1, 1.0);
        let ds = generate_synthetic(&spec, 300, 1).unwrap();
        let forest = ForestConfig {
            n_trees: 1,
            max_depth: 5,
            min_leaf: 2,
            feature_subsample: 1.0,
            bootstrap: false,
        };
        let f = train_random_forest(&ds, &forest, 42).unwrap();
        let c = train_cart(&ds, &CartConfig { max_depth: 5, min_leaf: 2 }).unwrap();
        assert_eq!(f, c);
    }

    #[test]
    fn forest_is_deterministic_and_leaf_covers_sum() {
        let spec = SyntheticSpec::additive(vec![1.0, 0.0, 0.0, 0.0], 0.5);
        let ds = generate_synthetic(&spec, 200, 2).unwrap();
        let cfg = ForestConfig { n_trees: 10, ..Default::default() };
        let a = train_random_forest(&ds, &cfg, 7).unwrap();
        assert_eq!(a, train_random_forest(&ds, &cfg, 7).unwrap());
        assert_ne!(a, train_random_forest(&ds, &cfg, 8).unwrap());
        for tree in &a.trees {
            let covered: f64 = tree.leaves().iter().map(|(_, c)| c).sum();
            // Bootstrap draws n rows with replacement.
            assert_eq!(covered, 200.0);
        }
    }

    #[test]
    fn forest_learns_interaction() {
        let spec = SyntheticSpec::additive(vec![0.0; 6], 0.0).with_interaction(0, 1, 2.0);
        let ds = generate_synthetic(&spec, 2000, 11).unwrap();
        let (train, test) = split(&ds, &SplitSpec::new(11, 0.8)).unwrap();
        let m = train_random_forest(&train, &ForestConfig::default(), 11).unwrap();
        let correct = test
            .rows()
            .zip(test.labels())
            .filter(|(x, &y)| u8::from(m.margin(x) >= 0.5) == y)
            .count();
        let acc = correct as f64 / test.n_rows() as f64;
        assert!(acc > 0.85, "accuracy {acc}");
    }

    #[test]
    fn zero_trees_rejected() {
        let ds = step_data();
        let cfg = ForestConfig { n_trees: 0, ..Default::default() };
        assert!(train_random_forest(&ds, &cfg, 0).is_err());
    }

    #[test]
    fn zero_cover_is_malformed() {
        let t = Node::Leaf { value: 1.0, cover: 0.0 };
        assert!(TreeEnsemble::new(vec![t], 0.0, Aggregation::Sum, 1).is_err());
    }
}
