//! Per-instance explanation reliability and its leave-one-out validation.

use crate::agreement::spearman;
use crate::attribution::AttributionVector;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

pub const HIGH_THRESHOLD: f64 = 0.7;
pub const LOW_THRESHOLD: f64 = 0.5;
/// Held-out agreement predicate threshold used by default.
pub const DEFAULT_AGREEMENT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    High,
    Moderate,
    Low,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::High, Zone::Moderate, Zone::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Zone::High => "high",
            Zone::Moderate => "moderate",
            Zone::Low => "low",
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `r > 0.7` is high, `r < 0.5` is low, both boundaries are moderate.
pub fn classify_zone(r: f64) -> Zone {
    if r > HIGH_THRESHOLD {
        Zone::High
    } else if r >= LOW_THRESHOLD {
        Zone::Moderate
    } else {
        Zone::Low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub instance_id: String,
    pub r: f64,
    pub zone: Zone,
    pub k: usize,
    pub undefined_pairs: usize,
}

/// Mean defined pairwise Spearman correlation, plus how many pairs were undefined.
///
/// `k < 2` gives 1.0. If every pair is undefined the mean is taken as 0.0.
fn mean_pairwise(vectors: &[&[f64]]) -> Result<(f64, usize)> {
    if vectors.len() < 2 {
        return Ok((1.0, 0));
    }
    let mut sum = 0.0;
    let mut defined = 0usize;
    let mut undefined = 0usize;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            match spearman(vectors[i], vectors[j])? {
                Some(rho) => {
                    sum += rho;
                    defined += 1;
                }
                None => undefined += 1,
            }
        }
    }
    let r = if defined == 0 { 0.0 } else { sum / defined as f64 };
    Ok((r, undefined))
}

fn check_instance(attrs: &[AttributionVector]) -> Result<()> {
    let Some(first) = attrs.first() else {
        return Err(Error::Empty("reliability score needs at least one attribution".into()));
    };
    for a in &attrs[1..] {
        if a.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                actual: a.dim(),
            });
        }
        if a.instance_id != first.instance_id {
            return Err(Error::invalid(format!(
                "attributions mix instances `{}` and `{}`",
                first.instance_id, a.instance_id
            )));
        }
    }
    Ok(())
}

/// Reliability of one instance from the attributions of `k` models.
pub fn reliability_score(attrs: &[AttributionVector]) -> Result<ReliabilityResult> {
    check_instance(attrs)?;
    let vectors: Vec<&[f64]> = attrs.iter().map(|a| a.phi.as_slice()).collect();
    let (r, undefined_pairs) = mean_pairwise(&vectors)?;
    Ok(ReliabilityResult {
        instance_id: attrs[0].instance_id.clone(),
        r,
        zone: classify_zone(r),
        k: attrs.len(),
        undefined_pairs,
    })
}

/// Score every instance; `per_instance[i]` holds the roster's attributions for instance `i`.
pub fn score_all(per_instance: &[Vec<AttributionVector>]) -> Result<Vec<ReliabilityResult>> {
    per_instance.par_iter().map(|attrs| reliability_score(attrs)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneStats {
    /// Number of (held-out model, instance) trials landing in this zone.
    pub count: usize,
    pub agreements: usize,
    /// `None` when the zone is empty.
    pub agreement_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub agreement_tau: f64,
    pub k: usize,
    pub n_instances: usize,
    /// Trials where the held-out model had no defined correlation with the rest.
    pub skipped: usize,
    pub zones: BTreeMap<Zone, ZoneStats>,
}

impl LooReport {
    pub fn n_scored(&self) -> usize {
        self.zones.values().map(|z| z.count).sum()
    }

    pub fn probability(&self, zone: Zone) -> Option<f64> {
        self.zones.get(&zone).and_then(|z| z.agreement_probability)
    }

    pub fn count(&self, zone: Zone) -> usize {
        self.zones.get(&zone).map_or(0, |z| z.count)
    }
}

/// Leave-one-out check of whether R(x) predicts agreement with an unseen model.
///
/// For every instance and held-out model `m`, R is computed from the other
/// `k - 1` attributions and `m` agrees iff its mean Spearman correlation with
/// them is at least `agreement_tau`. Trials are pooled across held-out choices.
pub fn loo_validate(per_instance: &[Vec<AttributionVector>], agreement_tau: f64) -> Result<LooReport> {
    let k = per_instance.first().map_or(0, Vec::len);
    if k < 3 {
        return Err(Error::invalid(format!("leave-one-out needs at least 3 models, got {k}")));
    }
    let trials: Vec<Vec<Option<(Zone, bool)>>> = per_instance
        .par_iter()
        .map(|attrs| {
            if attrs.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: attrs.len(),
                });
            }
            check_instance(attrs)?;
            (0..k)
                .map(|held| {
                    let rest: Vec<&[f64]> = (0..k).filter(|&i| i != held).map(|i| attrs[i].phi.as_slice()).collect();
                    let (r, _) = mean_pairwise(&rest)?;
                    let mut sum = 0.0;
                    let mut defined = 0usize;
                    for other in &rest {
                        if let Some(rho) = spearman(&attrs[held].phi, other)? {
                            sum += rho;
                            defined += 1;
                        }
                    }
                    Ok((defined > 0).then(|| (classify_zone(r), sum / defined as f64 >= agreement_tau)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut zones: BTreeMap<Zone, ZoneStats> = Zone::ALL
        .into_iter()
        .map(|z| {
            (
                z,
                ZoneStats {
                    count: 0,
                    agreements: 0,
                    agreement_probability: None,
                },
            )
        })
        .collect();
    let mut skipped = 0;
    for trial in trials.iter().flatten() {
        match trial {
            Some((zone, agrees)) => {
                let stats = zones.get_mut(zone).expect("all zones present");
                stats.count += 1;
                stats.agreements += usize::from(*agrees);
            }
            None => skipped += 1,
        }
    }
    for stats in zones.values_mut() {
        if stats.count > 0 {
            stats.agreement_probability = Some(stats.agreements as f64 / stats.count as f64);
        }
    }
    Ok(LooReport {
        agreement_tau,
        k,
        n_instances: per_instance.len(),
        skipped,
        zones,
    })
}

/// Columns: instance_id, r, zone, k, undefined_pairs.
pub fn write_reliability_csv<W: Write>(results: &[ReliabilityResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["instance_id", "r", "zone", "k", "undefined_pairs"])?;
    for res in results {
        w.write_record([
            res.instance_id.clone(),
            res.r.to_string(),
            res.zone.to_string(),
            res.k.to_string(),
            res.undefined_pairs.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<reliability csv>", e))?;
    Ok(())
}
