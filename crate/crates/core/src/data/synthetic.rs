use super::Dataset;
use crate::rng;
use crate::{Error, Result};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Pairwise interaction term `coef * x_i * x_j` (0-based feature indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

/// Data-generating process with additive and pairwise multiplicative terms.
///
/// `score(x) = sum_i beta_i x_i + sum_(i,j) alpha_ij x_i x_j + eps`, with
/// `eps ~ N(0, noise_sd^2)` and label `1` iff `score > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<Interaction>,
    #[serde(default)]
    pub noise_sd: f64,
}

impl SyntheticSpec {
    pub fn additive(beta: Vec<f64>, noise_sd: f64) -> Self {
        Self {
            d: beta.len(),
            beta,
            alpha: Vec::new(),
            noise_sd,
        }
    }

    /// Adds `coef * x_i * x_j`.
    pub fn with_interaction(mut self, i: usize, j: usize, coef: f64) -> Self {
        self.alpha.push(Interaction { i, j, coef });
        self
    }

    /// Same DGP with every interaction coefficient multiplied by `factor`.
    pub fn scale_interactions(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.alpha.iter_mut().for_each(|a| a.coef *= factor);
        out
    }

    /// Sum of absolute interaction coefficients.
    pub fn interaction_density(&self) -> f64 {
        self.alpha.iter().map(|a| a.coef.abs()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("synthetic dimension must be >= 1"));
        }
        if self.beta.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: self.beta.len(),
            });
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be finite and >= 0"));
        }
        for a in &self.alpha {
            if a.i == a.j || a.i >= self.d || a.j >= self.d {
                return Err(Error::invalid(format!(
                    "interaction ({}, {}) must join two distinct features below d = {}",
                    a.i, a.j, self.d
                )));
            }
            if !a.coef.is_finite() {
                return Err(Error::invalid("interaction coefficient must be finite"));
            }
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("additive coefficients must be finite"));
        }
        Ok(())
    }

    /// Noiseless score.
    pub fn score(&self, x: &[f64]) -> f64 {
        let additive: f64 = self.beta.iter().zip(x).map(|(b, v)| b * v).sum();
        let interactions: f64 = self.alpha.iter().map(|a| a.coef * x[a.i] * x[a.j]).sum();
        additive + interactions
    }
}

/// Draw `n` rows of i.i.d. standard normal features labelled by `spec`.
///
/// Each row consumes `d` feature draws followed by one noise draw, so the
/// feature matrix for a seed does not depend on `noise_sd`.
pub fn generate_synthetic(spec: &SyntheticSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("synthetic sample size must be >= 1"));
    }
    let d = spec.d;
    let mut rng = rng::seeded(seed);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        for _ in 0..d {
            features.push(StandardNormal.sample(&mut rng));
        }
        let eps: f64 = StandardNormal.sample(&mut rng);
        let score = spec.score(&features[start..]) + spec.noise_sd * eps;
        labels.push(u8::from(score > 0.0));
    }
    let names = (1..=d).map(|j| format!("x{j}")).collect();
    Dataset::new(format!("synthetic@{seed}"), names, features, labels)
}
