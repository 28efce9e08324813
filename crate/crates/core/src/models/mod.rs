//! Seeded, deterministic trainers for the tree, linear and neural hypothesis
//! classes, and a common prediction interface.
//!
//! Defaults: GBT 100 rounds, depth 3, learning rate 0.1; forest 100 trees,
//! depth 8; logistic `l2 = 1.0`, `tol = 1e-8`; ridge `lambda = 1.0`; MLP one
//! hidden layer of 16 rectifier units.

mod gbt;
mod linear;
mod mlp;
mod tree;

pub use gbt::{train_gbt, GbtConfig, PROBA_CLIP};
pub use linear::{
    logistic_objective, train_logistic, train_ridge, LinearKind, LinearModel, LogisticConfig, RidgeConfig,
};
pub use mlp::{train_mlp, Activation, MlpConfig, MlpModel};
pub use tree::{train_cart, train_random_forest, Aggregation, CartConfig, ForestConfig, Node, TreeEnsemble};

use crate::data::Dataset;
use crate::{short_digest, Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisClass {
    Tree,
    Linear,
    Neural,
}

impl fmt::Display for HypothesisClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HypothesisClass::Tree => "tree",
            HypothesisClass::Linear => "linear",
            HypothesisClass::Neural => "neural",
        })
    }
}

/// Trainer selection plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Logistic(LogisticConfig),
    Ridge(RidgeConfig),
    Cart(CartConfig),
    Forest(ForestConfig),
    Gbt(GbtConfig),
    Mlp(MlpConfig),
}

impl ModelConfig {
    pub fn hypothesis_class(&self) -> HypothesisClass {
        match self {
            ModelConfig::Logistic(_) | ModelConfig::Ridge(_) => HypothesisClass::Linear,
            ModelConfig::Cart(_) | ModelConfig::Forest(_) | ModelConfig::Gbt(_) => HypothesisClass::Tree,
            ModelConfig::Mlp(_) => HypothesisClass::Neural,
        }
    }

    /// Short hex digest of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        short_digest(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelPayload {
    Linear(LinearModel),
    Tree(TreeEnsemble),
    Mlp(MlpModel),
}

impl ModelPayload {
    pub fn hypothesis_class(&self) -> HypothesisClass {
        match self {
            ModelPayload::Linear(_) => HypothesisClass::Linear,
            ModelPayload::Tree(_) => HypothesisClass::Tree,
            ModelPayload::Mlp(_) => HypothesisClass::Neural,
        }
    }
}

/// A fitted model together with what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub hypothesis_class: HypothesisClass,
    pub seed: u64,
    pub config_digest: String,
    pub config: ModelConfig,
    pub payload: ModelPayload,
}

/// Train `config` on `train`. Every trainer is a pure function of
/// `(train, config, seed)`.
pub fn train(train: &Dataset, config: &ModelConfig, seed: u64) -> Result<TrainedModel> {
    let payload = match config {
        ModelConfig::Logistic(c) => ModelPayload::Linear(train_logistic(train, c)?),
        ModelConfig::Ridge(c) => ModelPayload::Linear(train_ridge(train, c)?),
        ModelConfig::Cart(c) => ModelPayload::Tree(train_cart(train, c)?),
        ModelConfig::Forest(c) => ModelPayload::Tree(train_random_forest(train, c, seed)?),
        ModelConfig::Gbt(c) => ModelPayload::Tree(train_gbt(train, c, seed)?),
        ModelConfig::Mlp(c) => ModelPayload::Mlp(train_mlp(train, c, seed)?),
    };
    TrainedModel::new(*config, seed, payload)
}

impl TrainedModel {
    pub fn new(config: ModelConfig, seed: u64, payload: ModelPayload) -> Result<Self> {
        let model = Self {
            hypothesis_class: payload.hypothesis_class(),
            seed,
            config_digest: config.digest(),
            config,
            payload,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.hypothesis_class != self.payload.hypothesis_class()
            || self.hypothesis_class != self.config.hypothesis_class()
        {
            return Err(Error::invalid(format!(
                "class tag {} disagrees with payload {}",
                self.hypothesis_class,
                self.payload.hypothesis_class()
            )));
        }
        match &self.payload {
            ModelPayload::Tree(t) => t.validate(),
            ModelPayload::Linear(l) => {
                if l.weights.len() != l.feature_means.len()
                    || !l.bias.is_finite()
                    || l.weights.iter().chain(&l.feature_means).any(|v| !v.is_finite())
                {
                    return Err(Error::invalid("linear model parameters malformed"));
                }
                Ok(())
            }
            ModelPayload::Mlp(m) => {
                let (d, h) = (m.n_features(), m.hidden_width());
                if m.hidden_weights.len() != d * h || m.output_weights.len() != h || !m.is_finite() {
                    return Err(Error::invalid("MLP layer dimensions do not compose"));
                }
                Ok(())
            }
        }
    }

    pub fn n_features(&self) -> usize {
        match &self.payload {
            ModelPayload::Linear(l) => l.n_features(),
            ModelPayload::Tree(t) => t.n_features,
            ModelPayload::Mlp(m) => m.n_features(),
        }
    }

    /// Pre-link score: log-odds for logistic, boosted trees and MLP; mean leaf
    /// value (class-1 rate) for bagged trees; `w . x + b` for ridge.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match &self.payload {
            ModelPayload::Linear(l) => l.margin(x),
            ModelPayload::Tree(t) => t.margin(x),
            ModelPayload::Mlp(m) => m.margin(x),
        }
    }

    /// True when the margin is already a probability.
    fn margin_is_probability(&self) -> bool {
        matches!(&self.payload, ModelPayload::Tree(t) if t.aggregation == Aggregation::Mean)
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let m = self.margin(x);
        if self.margin_is_probability() {
            m.clamp(0.0, 1.0)
        } else {
            linear::sigmoid(m)
        }
    }

    pub fn predict_label(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) >= 0.5)
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let ok = data
            .rows()
            .zip(data.labels())
            .filter(|(x, &y)| self.predict_label(x) == y)
            .count();
        ok as f64 / data.n_rows() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}
