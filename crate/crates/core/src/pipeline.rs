//! One seeded audit pass: train a roster, keep the instances every model
//! labels identically, attribute them and tabulate pairwise agreement.

use crate::agreement::{build_agreement_table, equivalence_filter, AgreementTable, EquivalentSet, ModelAttributions, NamedModel};
use crate::attribution::{explain, AttributionVector, BackgroundSet, ExplainContext, KernelOptions, LinearEngine, Scale};
use crate::data::Dataset;
use crate::models::{self, CartConfig, ForestConfig, GbtConfig, LogisticConfig, MlpConfig, ModelConfig, RidgeConfig};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A roster slot. The model is trained with seed `run_seed + seed_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub id: String,
    pub config: ModelConfig,
    #[serde(default)]
    pub seed_offset: u64,
}

impl RosterEntry {
    pub fn new(id: impl Into<String>, config: ModelConfig) -> Self {
        Self {
            id: id.into(),
            config,
            seed_offset: 0,
        }
    }

    pub fn with_seed_offset(mut self, offset: u64) -> Self {
        self.seed_offset = offset;
        self
    }
}

/// Two deterministic GBTs (different seeds), a forest, a CART tree,
/// logistic and ridge regression.
pub fn default_roster() -> Vec<RosterEntry> {
    vec![
        RosterEntry::new("gbt", ModelConfig::Gbt(GbtConfig::default())),
        RosterEntry::new("gbt2", ModelConfig::Gbt(GbtConfig::default())).with_seed_offset(1),
        RosterEntry::new("forest", ModelConfig::Forest(ForestConfig::default())),
        RosterEntry::new("cart", ModelConfig::Cart(CartConfig::default())),
        RosterEntry::new("logistic", ModelConfig::Logistic(LogisticConfig::default())),
        RosterEntry::new("ridge", ModelConfig::Ridge(RidgeConfig::default())),
    ]
}

/// Look up a roster entry by short name (`gbt`, `forest`, `cart`, `logistic`,
/// `ridge`, `mlp`, optionally suffixed with a digit for extra seeds).
pub fn preset(name: &str) -> Option<RosterEntry> {
    let base = name.trim_end_matches(|c: char| c.is_ascii_digit());
    let offset = name[base.len()..].parse::<u64>().map_or(0, |k| k.saturating_sub(1));
    let config = match base {
        "gbt" => ModelConfig::Gbt(GbtConfig::default()),
        "forest" => ModelConfig::Forest(ForestConfig::default()),
        "cart" => ModelConfig::Cart(CartConfig::default()),
        "logistic" => ModelConfig::Logistic(LogisticConfig::default()),
        "ridge" => ModelConfig::Ridge(RidgeConfig::default()),
        "mlp" => ModelConfig::Mlp(MlpConfig::default()),
        _ => return None,
    };
    Some(RosterEntry::new(name, config).with_seed_offset(offset))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionOptions {
    pub kernel: KernelOptions,
    /// Rows of the training split used as the interventional background.
    pub background_rows: usize,
    pub linear_engine: LinearEngine,
}

impl Default for AttributionOptions {
    fn default() -> Self {
        Self {
            kernel: KernelOptions::default(),
            background_rows: 100,
            linear_engine: LinearEngine::Exact,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitRun {
    pub seed: u64,
    pub models: Vec<NamedModel>,
    pub test_accuracy: Vec<f64>,
    pub equivalent: EquivalentSet,
    /// Roster order; vectors follow `equivalent` order.
    pub attributions: Vec<ModelAttributions>,
    pub table: AgreementTable,
}

impl SplitRun {
    /// Roster attributions grouped per instance.
    pub fn per_instance(&self) -> Vec<Vec<AttributionVector>> {
        (0..self.equivalent.len())
            .map(|i| self.attributions.iter().map(|m| m.vectors[i].clone()).collect())
            .collect()
    }
}

pub fn train_roster(train: &Dataset, roster: &[RosterEntry], seed: u64) -> Result<Vec<NamedModel>> {
    let mut ids: Vec<&str> = roster.iter().map(|e| e.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("roster ids must be unique"));
    }
    roster
        .par_iter()
        .map(|entry| {
            Ok(NamedModel {
                id: entry.id.clone(),
                model: models::train(train, &entry.config, seed.wrapping_add(entry.seed_offset))?,
            })
        })
        .collect()
}

/// Instance ids carry the seed so tables from several seeds can be merged.
pub fn seeded_instance_id(seed: u64, test: &Dataset, position: usize) -> String {
    format!("s{seed}/r{}", test.row_ids()[position])
}

/// Train, filter, attribute and tabulate on a fixed split.
pub fn run_split(
    train: &Dataset,
    test: &Dataset,
    roster: &[RosterEntry],
    seed: u64,
    opts: &AttributionOptions,
) -> Result<SplitRun> {
    if roster.is_empty() {
        return Err(Error::invalid("roster is empty"));
    }
    let models = train_roster(train, roster, seed)?;
    let mut equivalent = equivalence_filter(&models, test)?;
    if equivalent.is_empty() {
        return Err(Error::EmptyEquivalenceSet);
    }
    equivalent.instance_ids = equivalent
        .positions
        .iter()
        .map(|&p| seeded_instance_id(seed, test, p))
        .collect();
    let ctx = ExplainContext {
        background: BackgroundSet::sample(train, opts.background_rows, seed)?,
        kernel: KernelOptions {
            seed: crate::rng::derive_seed(opts.kernel.seed, seed),
            ..opts.kernel
        },
        linear_engine: opts.linear_engine,
        scale: Scale::Margin,
    };
    let attributions = models
        .iter()
        .enumerate()
        .map(|(m, named)| {
            let vectors = equivalent
                .positions
                .par_iter()
                .zip(&equivalent.instance_ids)
                .enumerate()
                .map(|(i, (&pos, id))| {
                    let stream = (m as u64) << 32 | i as u64;
                    Ok(explain(&named.model, test.row(pos), &ctx, stream)?.labeled(&named.id, id))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelAttributions {
                model_id: named.id.clone(),
                class: named.model.hypothesis_class,
                vectors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = build_agreement_table(&attributions)?;
    Ok(SplitRun {
        seed,
        test_accuracy: models.iter().map(|m| m.model.accuracy(test)).collect(),
        models,
        equivalent,
        attributions,
        table,
    })
}
