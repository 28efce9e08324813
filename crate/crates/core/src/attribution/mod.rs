//! Shapley attribution engines.
//!
//! All engines explain the model margin (pre-link score). Exact engines
//! satisfy efficiency to rounding error: `sum(phi) == explained_value - baseline`.

mod exact;
mod kernel;
mod linear;
mod tree;

pub use exact::{exact_shapley, Coalition, MAX_EXACT_FEATURES};
pub use kernel::{kernel_shap, KernelOptions, DEFAULT_RIDGE};
pub use linear::linear_shap;
pub use tree::{tree_shap, tree_shap_single, value_path_dependent};

use crate::data::Dataset;
use crate::models::{ModelPayload, TrainedModel};
use crate::{Error, Result};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Margin,
    Probability,
}

/// Per-instance, per-model feature attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub phi: Vec<f64>,
    pub model_id: String,
    pub instance_id: String,
    /// Expected model output under the engine's value function, `v(empty)`.
    pub baseline: f64,
    /// Model output at the explained instance, `v(all)`.
    pub explained_value: f64,
    pub scale: Scale,
}

impl AttributionVector {
    pub fn new(phi: Vec<f64>, baseline: f64, explained_value: f64) -> Self {
        Self {
            phi,
            model_id: String::new(),
            instance_id: String::new(),
            baseline,
            explained_value,
            scale: Scale::Margin,
        }
    }

    pub fn labeled(mut self, model_id: impl Into<String>, instance_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self.instance_id = instance_id.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// `|sum(phi) - (explained_value - baseline)|`.
    pub fn efficiency_gap(&self) -> f64 {
        let total: f64 = self.phi.iter().sum();
        (total - (self.explained_value - self.baseline)).abs()
    }
}

/// Reference sample standing in for the feature distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub feature_means: Vec<f64>,
    rows: Vec<f64>,
    d: usize,
}

impl BackgroundSet {
    pub fn from_rows(rows: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || rows.is_empty() || rows.len() % d != 0 {
            return Err(Error::invalid("background needs at least one full row"));
        }
        let m = rows.len() / d;
        let mut means = vec![0.0; d];
        for row in rows.chunks_exact(d) {
            for (acc, v) in means.iter_mut().zip(row) {
                *acc += v;
            }
        }
        means.iter_mut().for_each(|v| *v /= m as f64);
        Ok(Self {
            feature_means: means,
            rows,
            d,
        })
    }

    /// Every row of `ds`.
    pub fn full(ds: &Dataset) -> Self {
        Self::from_rows(ds.features().to_vec(), ds.n_features()).expect("dataset is nonempty")
    }

    /// Up to `max_rows` rows of `ds` drawn without replacement (seeded); all
    /// rows when `ds` is no larger.
    pub fn sample(ds: &Dataset, max_rows: usize, seed: u64) -> Result<Self> {
        if max_rows == 0 {
            return Err(Error::invalid("background size must be >= 1"));
        }
        if ds.n_rows() <= max_rows {
            return Ok(Self::full(ds));
        }
        let mut picks = sample(&mut crate::rng::seeded(seed), ds.n_rows(), max_rows).into_vec();
        picks.sort_unstable();
        let rows = picks.iter().flat_map(|&i| ds.row(i).iter().copied()).collect();
        Self::from_rows(rows, ds.n_features())
    }

    /// Single row at the feature means.
    pub fn means_only(means: Vec<f64>) -> Result<Self> {
        let d = means.len();
        Self::from_rows(means, d)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.d
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.rows.chunks_exact(self.d)
    }
}

/// Interventional coalition value: mean over background rows of `f` evaluated
/// at `x` with the features outside `coalition` replaced by the row's values.
pub fn value_interventional(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    coalition: Coalition,
    background: &BackgroundSet,
) -> f64 {
    let mut z = vec![0.0; x.len()];
    let mut total = 0.0;
    for row in background.rows() {
        for j in 0..x.len() {
            z[j] = if coalition.contains(j) { x[j] } else { row[j] };
        }
        total += f(&z);
    }
    total / background.n_rows() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearEngine {
    /// Closed form `w_j (x_j - mean_j)`.
    #[default]
    Exact,
    /// Sampled kernel estimator, as for black-box models.
    Kernel,
}

/// Engine choice and sampling settings for [`explain`].
#[derive(Debug, Clone)]
pub struct ExplainContext {
    pub background: BackgroundSet,
    pub kernel: KernelOptions,
    pub linear_engine: LinearEngine,
    pub scale: Scale,
}

/// Attribute `model` at `x` with the engine matching its hypothesis class:
/// path-dependent TreeSHAP for trees, the closed form for linear models,
/// KernelSHAP for networks. Probability scale routes every model through
/// KernelSHAP on `predict_proba`.
///
/// `stream` selects the kernel sampler's sub-stream, typically the instance index.
pub fn explain(model: &TrainedModel, x: &[f64], ctx: &ExplainContext, stream: u64) -> Result<AttributionVector> {
    if x.len() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: x.len(),
        });
    }
    let kernel = KernelOptions {
        seed: crate::rng::derive_seed(ctx.kernel.seed, stream),
        ..ctx.kernel
    };
    if ctx.scale == Scale::Probability {
        let mut out = kernel_shap(|z| model.predict_proba(z), x, &ctx.background, &kernel)?;
        out.scale = Scale::Probability;
        return Ok(out);
    }
    match (&model.payload, ctx.linear_engine) {
        (ModelPayload::Tree(t), _) => tree_shap(t, x),
        (ModelPayload::Linear(l), LinearEngine::Exact) => linear_shap(l, x),
        _ => kernel_shap(|z| model.margin(z), x, &ctx.background, &kernel),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interventional_extremes() {
        let bg = BackgroundSet::from_rows(vec![0.0, 0.0, 2.0, 4.0], 2).unwrap();
        let f = |z: &[f64]| z[0] + 3.0 * z[1];
        let x = [1.0, 1.0];
        assert_eq!(value_interventional(f, &x, Coalition::full(2), &bg), 4.0);
        assert_eq!(value_interventional(f, &x, Coalition::empty(), &bg), (0.0 + 14.0) / 2.0);
    }

    #[test]
    fn sampled_background_is_seeded_subset() {
        let ds = crate::data::generate_synthetic(&crate::data::SyntheticSpec::additive(vec![1.0, 1.0], 0.0), 500, 1).unwrap();
        let a = BackgroundSet::sample(&ds, 100, 3).unwrap();
        assert_eq!(a.n_rows(), 100);
        assert_eq!(a, BackgroundSet::sample(&ds, 100, 3).unwrap());
        let full = BackgroundSet::sample(&ds, 1000, 3).unwrap();
        assert_eq!(full.feature_means, ds.feature_means());
    }
}
