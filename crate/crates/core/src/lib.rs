//! Core algorithms for auditing explanation disagreement among
//! prediction-equivalent models.
//!
//! The crate is organized bottom-up:
//!
//! - [`data`]: CSV ingestion, seeded splitting, synthetic interaction DGPs, remote fetch.
//! - [`models`]: deterministic trainers for tree, linear and neural hypothesis classes.
//! - [`attribution`]: exact linear, path-dependent tree, sampled kernel and brute-force Shapley engines.
//! - [`agreement`]: equivalence filtering, Spearman agreement tables, lottery rate, agreement gap.
//! - [`pipeline`]: one seeded train / filter / attribute / agree pass over a model roster.
//! - [`reliability`]: per-instance reliability score, zones and leave-one-out validation.
//! - [`stats`]: rank-sum test, effect sizes, bootstrap intervals, multiple-comparison correction.
//! - [`theoryval`]: synthetic experiments that exercise the agreement-gap claims end to end.

pub mod agreement;
pub mod attribution;
pub mod data;
mod error;
pub mod models;
pub mod pipeline;
pub mod reliability;
pub mod rng;
pub mod stats;
pub mod theoryval;

pub use agreement::{AgreementRecord, AgreementTable, EquivalentSet, NamedModel, PairClass, PairKey};
pub use attribution::{AttributionVector, BackgroundSet};
pub use data::{Dataset, SplitSpec, SyntheticSpec};
pub use error::{Error, Result};
pub use models::{HypothesisClass, ModelConfig, TrainedModel};
pub use reliability::{LooReport, ReliabilityResult, Zone};

/// First 8 bytes of the SHA-256 of `bytes`, hex encoded.
pub fn short_digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(bytes)[..8])
}
