//! Tabular datasets: ingestion, seeded splitting and synthetic generation.

mod fetch;
mod ingest;
mod synthetic;

pub use fetch::{fetch_remote, CACHE_DIR_ENV};
pub use ingest::{load_csv, read_csv};
pub use synthetic::{generate_synthetic, Interaction, SyntheticSpec};

use crate::rng;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Row-major feature matrix with binary labels.
///
/// `row_ids` carries the original row index of each row so that instances
/// remain identifiable after splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    feature_names: Vec<String>,
    features: Vec<f64>,
    labels: Vec<u8>,
    row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let row_ids = (0..labels.len()).collect();
        Self::with_row_ids(id, feature_names, features, labels, row_ids)
    }

    pub fn with_row_ids(
        id: impl Into<String>,
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<u8>,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        let d = feature_names.len();
        let n = labels.len();
        if d == 0 {
            return Err(Error::Empty("dataset has no feature columns".into()));
        }
        if n == 0 {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        if features.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                actual: features.len(),
            });
        }
        if row_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: row_ids.len(),
            });
        }
        let mut seen = HashSet::with_capacity(d);
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate feature name `{name}`")));
            }
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature value at row {}, column `{}`",
                pos / d,
                feature_names[pos % d]
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::invalid(format!("label {bad} outside {{0,1}}")));
        }
        Ok(Self {
            id: id.into(),
            feature_names,
            features,
            labels,
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features())
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    /// Column means.
    pub fn feature_means(&self) -> Vec<f64> {
        let d = self.n_features();
        let mut means = vec![0.0; d];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n_rows() as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// True when only one class is present.
    pub fn is_degenerate(&self) -> bool {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        ones == 0 || ones == self.n_rows()
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&y| y as f64).sum::<f64>() / self.n_rows() as f64
    }

    /// Sub-dataset holding the given row positions, in the order given.
    pub fn subset(&self, positions: &[usize], id: impl Into<String>) -> Result<Self> {
        let d = self.n_features();
        let mut features = Vec::with_capacity(positions.len() * d);
        let mut labels = Vec::with_capacity(positions.len());
        let mut row_ids = Vec::with_capacity(positions.len());
        for &p in positions {
            if p >= self.n_rows() {
                return Err(Error::invalid(format!("row position {p} out of range")));
            }
            features.extend_from_slice(self.row(p));
            labels.push(self.labels[p]);
            row_ids.push(self.row_ids[p]);
        }
        Self::with_row_ids(id, self.feature_names.clone(), features, labels, row_ids)
    }
}

/// Seeded train/test partition request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
}

impl SplitSpec {
    pub fn new(seed: u64, train_fraction: f64) -> Self {
        Self {
            seed,
            train_fraction,
        }
    }

    /// Number of training rows for a dataset of `n` rows.
    pub fn train_size(&self, n: usize) -> Result<usize> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        let n_train = (n as f64 * self.train_fraction).floor() as usize;
        if n_train == 0 || n_train >= n {
            return Err(Error::invalid(format!(
                "train_fraction {} on {n} rows yields an empty partition",
                self.train_fraction
            )));
        }
        Ok(n_train)
    }

    /// Row positions of the (train, test) partition, each sorted ascending.
    ///
    /// The permutation is a Fisher-Yates shuffle driven by ChaCha8 seeded with
    /// `seed`; the first `floor(n * train_fraction)` shuffled positions train.
    pub fn partition(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let n_train = self.train_size(n)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(self.seed));
        let mut train = order[..n_train].to_vec();
        let mut test = order[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }
}

/// Split `ds` into disjoint train and test datasets.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = spec.partition(ds.n_rows())?;
    Ok((
        ds.subset(&train, format!("{}/train@{}", ds.id, spec.seed))?,
        ds.subset(&test, format!("{}/test@{}", ds.id, spec.seed))?,
    ))
}
