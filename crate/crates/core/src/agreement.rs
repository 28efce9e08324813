//! Prediction-equivalence filtering and attribution agreement metrics.

use crate::attribution::AttributionVector;
use crate::data::Dataset;
use crate::models::{HypothesisClass, TrainedModel};
use crate::stats::{self, Interval};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

/// Spearman rank correlation: Pearson correlation of average ranks.
///
/// `None` when either vector has zero rank variance (all entries tied).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("spearman needs at least 2 entries"));
    }
    let ra = stats::average_ranks(a);
    let rb = stats::average_ranks(b);
    let (ma, mb) = (stats::mean(&ra), stats::mean(&rb));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

/// Model with a roster-unique identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub id: String,
    pub model: TrainedModel,
}

/// Test instances on which every roster model emits the same label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalentSet {
    /// Row positions in the filtered dataset.
    pub positions: Vec<usize>,
    pub instance_ids: Vec<String>,
    pub coverage_fraction: f64,
}

impl EquivalentSet {
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }
}

/// Default instance identifier: `r<original row index>`.
pub fn instance_id(ds: &Dataset, position: usize) -> String {
    format!("r{}", ds.row_ids()[position])
}

pub fn equivalence_filter(models: &[NamedModel], test: &Dataset) -> Result<EquivalentSet> {
    if models.is_empty() {
        return Err(Error::invalid("equivalence filter needs at least one model"));
    }
    for m in models {
        if m.model.n_features() != test.n_features() {
            return Err(Error::DimensionMismatch {
                expected: test.n_features(),
                actual: m.model.n_features(),
            });
        }
    }
    let positions: Vec<usize> = (0..test.n_rows())
        .filter(|&i| {
            let x = test.row(i);
            let first = models[0].model.predict_label(x);
            models[1..].iter().all(|m| m.model.predict_label(x) == first)
        })
        .collect();
    Ok(EquivalentSet {
        instance_ids: positions.iter().map(|&p| instance_id(test, p)).collect(),
        coverage_fraction: positions.len() as f64 / test.n_rows() as f64,
        positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairClass {
    #[serde(rename = "intra-tree")]
    IntraTree,
    #[serde(rename = "intra-linear")]
    IntraLinear,
    #[serde(rename = "intra-neural")]
    IntraNeural,
    #[serde(rename = "cross(tree,linear)")]
    CrossTreeLinear,
    #[serde(rename = "cross(tree,neural)")]
    CrossTreeNeural,
    #[serde(rename = "cross(linear,neural)")]
    CrossLinearNeural,
}

impl PairClass {
    pub const ALL: [PairClass; 6] = [
        PairClass::IntraTree,
        PairClass::IntraLinear,
        PairClass::IntraNeural,
        PairClass::CrossTreeLinear,
        PairClass::CrossTreeNeural,
        PairClass::CrossLinearNeural,
    ];

    pub fn of(a: HypothesisClass, b: HypothesisClass) -> Self {
        use HypothesisClass::*;
        match (a.min(b), a.max(b)) {
            (Tree, Tree) => PairClass::IntraTree,
            (Linear, Linear) => PairClass::IntraLinear,
            (Neural, Neural) => PairClass::IntraNeural,
            (Tree, Linear) => PairClass::CrossTreeLinear,
            (Tree, Neural) => PairClass::CrossTreeNeural,
            (Linear, Neural) => PairClass::CrossLinearNeural,
            _ => unreachable!("min/max ordering"),
        }
    }

    pub fn is_intra(self) -> bool {
        matches!(self, PairClass::IntraTree | PairClass::IntraLinear | PairClass::IntraNeural)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairClass::IntraTree => "intra-tree",
            PairClass::IntraLinear => "intra-linear",
            PairClass::IntraNeural => "intra-neural",
            PairClass::CrossTreeLinear => "cross(tree,linear)",
            PairClass::CrossTreeNeural => "cross(tree,neural)",
            PairClass::CrossLinearNeural => "cross(linear,neural)",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub model_a: String,
    pub model_b: String,
    pub pair_class: PairClass,
}

impl PairKey {
    /// Orders the two ids so that `model_a < model_b`.
    pub fn new(id_a: &str, class_a: HypothesisClass, id_b: &str, class_b: HypothesisClass) -> Self {
        let (a, b) = if id_a <= id_b { (id_a, id_b) } else { (id_b, id_a) };
        Self {
            model_a: a.to_string(),
            model_b: b.to_string(),
            pair_class: PairClass::of(class_a, class_b),
        }
    }

    pub fn label(&self) -> String {
        format!("{}~{}", self.model_a, self.model_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub pair: PairKey,
    pub instance_id: String,
    /// `None` is the undefined sentinel (zero rank variance).
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// `None` when every record in the group is undefined.
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub sd: Option<f64>,
    pub count: usize,
    pub undefined: usize,
}

impl Aggregate {
    fn from_records<'a>(records: impl Iterator<Item = &'a AgreementRecord>) -> Option<Self> {
        let mut values = Vec::new();
        let mut undefined = 0;
        for r in records {
            match r.rho {
                Some(v) => values.push(v),
                None => undefined += 1,
            }
        }
        if values.is_empty() && undefined == 0 {
            return None;
        }
        let (mean, median, sd) = if values.is_empty() {
            (None, None, None)
        } else {
            (
                Some(stats::mean(&values)),
                Some(stats::median(&values)),
                Some(stats::std_dev(&values)),
            )
        };
        Some(Self {
            mean,
            median,
            sd,
            count: values.len(),
            undefined,
        })
    }
}

/// All attributions of one model, aligned by instance with every other model's.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAttributions {
    pub model_id: String,
    pub class: HypothesisClass,
    pub vectors: Vec<AttributionVector>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    /// Sorted by (model_a, model_b), then instance order.
    pub records: Vec<AgreementRecord>,
    pub by_class: BTreeMap<PairClass, Aggregate>,
    /// Keyed by `model_a~model_b`.
    pub by_pair: BTreeMap<String, Aggregate>,
    pub undefined_count: usize,
}

impl AgreementTable {
    /// Aggregates recomputed from `records`, which are kept in the given order.
    pub fn from_records(records: Vec<AgreementRecord>) -> Self {
        let mut by_class = BTreeMap::new();
        for class in PairClass::ALL {
            if let Some(agg) = Aggregate::from_records(records.iter().filter(|r| r.pair.pair_class == class)) {
                by_class.insert(class, agg);
            }
        }
        let mut pair_keys: Vec<&PairKey> = records.iter().map(|r| &r.pair).collect();
        pair_keys.sort();
        pair_keys.dedup();
        let by_pair = pair_keys
            .into_iter()
            .filter_map(|key| {
                Aggregate::from_records(records.iter().filter(|r| &r.pair == key)).map(|agg| (key.label(), agg))
            })
            .collect();
        let undefined_count = records.iter().filter(|r| r.rho.is_none()).count();
        Self {
            records,
            by_class,
            by_pair,
            undefined_count,
        }
    }

    /// Concatenate tables (e.g. several seeds) and re-aggregate.
    pub fn merge(tables: impl IntoIterator<Item = AgreementTable>) -> Self {
        Self::from_records(tables.into_iter().flat_map(|t| t.records).collect())
    }

    pub fn rhos(&self, class: PairClass) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.pair.pair_class == class)
            .filter_map(|r| r.rho)
            .collect()
    }

    pub fn defined(&self) -> impl Iterator<Item = (&AgreementRecord, f64)> + '_ {
        self.records.iter().filter_map(|r| r.rho.map(|v| (r, v)))
    }
}

/// One record per (model pair, instance) over all `k (k - 1) / 2` pairs.
pub fn build_agreement_table(attributions: &[ModelAttributions]) -> Result<AgreementTable> {
    if let Some(first) = attributions.first() {
        for m in &attributions[1..] {
            if m.vectors.len() != first.vectors.len()
                || m.vectors.iter().zip(&first.vectors).any(|(a, b)| a.instance_id != b.instance_id)
            {
                return Err(Error::invalid(format!(
                    "attributions of `{}` are not aligned with `{}`",
                    m.model_id, first.model_id
                )));
            }
        }
    }
    let k = attributions.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let per_pair: Vec<Vec<AgreementRecord>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&attributions[i], &attributions[j]);
            let key = PairKey::new(&a.model_id, a.class, &b.model_id, b.class);
            a.vectors
                .iter()
                .zip(&b.vectors)
                .map(|(va, vb)| {
                    Ok(AgreementRecord {
                        pair: key.clone(),
                        instance_id: va.instance_id.clone(),
                        rho: spearman(&va.phi, &vb.phi)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut blocks: Vec<Vec<AgreementRecord>> = per_pair;
    blocks.sort_by(|x, y| match (x.first(), y.first()) {
        (Some(a), Some(b)) => a.pair.cmp(&b.pair),
        _ => std::cmp::Ordering::Equal,
    });
    Ok(AgreementTable::from_records(blocks.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            level: 0.95,
            resamples: stats::DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LotteryRate {
    pub tau: f64,
    pub rate: f64,
    pub n_defined: usize,
    pub ci: Option<Interval>,
}

/// Fraction of defined records with `rho < tau`.
pub fn lottery_rate(table: &AgreementTable, tau: f64, ci: Option<&BootstrapSettings>) -> Result<LotteryRate> {
    lottery_rate_where(table, tau, |_| true, ci)
}

/// [`lottery_rate`] restricted to records accepted by `keep`.
///
/// The interval bootstraps per-instance mean indicators, so instances rather
/// than records are the resampled unit.
pub fn lottery_rate_where(
    table: &AgreementTable,
    tau: f64,
    keep: impl Fn(&AgreementRecord) -> bool,
    ci: Option<&BootstrapSettings>,
) -> Result<LotteryRate> {
    let mut below = 0usize;
    let mut n_defined = 0usize;
    let mut per_instance: Vec<(f64, usize)> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (record, rho) in table.defined().filter(|(r, _)| keep(r)) {
        n_defined += 1;
        let hit = f64::from(u8::from(rho < tau));
        below += hit as usize;
        let slot = *index.entry(record.instance_id.as_str()).or_insert_with(|| {
            per_instance.push((0.0, 0));
            per_instance.len() - 1
        });
        per_instance[slot].0 += hit;
        per_instance[slot].1 += 1;
    }
    if n_defined == 0 {
        return Err(Error::Empty(format!("no defined agreement records for tau = {tau}")));
    }
    let interval = match ci {
        Some(settings) if per_instance.len() >= 2 => {
            let means: Vec<f64> = per_instance.iter().map(|(s, c)| s / *c as f64).collect();
            Some(stats::bootstrap_ci(&means, stats::mean, settings.level, settings.resamples, settings.seed)?)
        }
        _ => None,
    };
    Ok(LotteryRate {
        tau,
        rate: below as f64 / n_defined as f64,
        n_defined,
        ci: interval,
    })
}

/// Mean rho over `intra_class` records minus mean rho over `inter_pair` records.
pub fn agreement_gap(table: &AgreementTable, intra_class: PairClass, inter_pair: PairClass) -> Result<f64> {
    let intra = table.rhos(intra_class);
    let inter = table.rhos(inter_pair);
    if intra.is_empty() || inter.is_empty() {
        return Err(Error::Empty(format!(
            "agreement gap needs defined records for both {intra_class} ({}) and {inter_pair} ({})",
            intra.len(),
            inter.len()
        )));
    }
    Ok(stats::mean(&intra) - stats::mean(&inter))
}

/// Indices of the `k` largest `|phi|`, ties broken by lower feature index.
pub fn top_k_features(phi: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..phi.len()).collect();
    order.sort_by(|&a, &b| phi[b].abs().total_cmp(&phi[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopKDisagreement {
    /// The top-k sets differ.
    pub partial: bool,
    /// The top-k sets are disjoint.
    pub complete: bool,
}

pub fn topk_disagreement(a: &[f64], b: &[f64], k: usize) -> Result<TopKDisagreement> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let ta = top_k_features(a, k);
    let tb = top_k_features(b, k);
    Ok(TopKDisagreement {
        partial: ta != tb,
        complete: !ta.is_empty() && ta.iter().all(|f| !tb.contains(f)),
    })
}

const CSV_HEADER: [&str; 6] = ["model_a", "model_b", "pair_class", "instance_id", "rho", "defined"];

/// Write one row per record; undefined rho is an empty field with `defined = 0`.
pub fn write_agreement_csv<W: Write>(table: &AgreementTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in &table.records {
        let rho = r.rho.map(|v| v.to_string()).unwrap_or_default();
        let defined = if r.rho.is_some() { "1" } else { "0" };
        w.write_record([
            r.pair.model_a.as_str(),
            r.pair.model_b.as_str(),
            r.pair.pair_class.as_str(),
            r.instance_id.as_str(),
            rho.as_str(),
            defined,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<agreement csv>", e))?;
    Ok(())
}

/// Inverse of [`write_agreement_csv`].
pub fn read_agreement_csv<R: Read>(reader: R) -> Result<AgreementTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::invalid(format!("agreement csv row {row}: expected 6 fields")));
        }
        let pair_class = PairClass::parse(&rec[2])
            .ok_or_else(|| Error::invalid(format!("agreement csv row {row}: unknown pair class `{}`", &rec[2])))?;
        let rho = match &rec[5] {
            "1" => Some(rec[4].parse::<f64>().map_err(|_| Error::NonNumeric {
                row,
                column: "rho".into(),
                value: rec[4].to_string(),
            })?),
            _ => None,
        };
        records.push(AgreementRecord {
            pair: PairKey {
                model_a: rec[0].to_string(),
                model_b: rec[1].to_string(),
                pair_class,
            },
            instance_id: rec[3].to_string(),
            rho,
        });
    }
    Ok(AgreementTable::from_records(records))
}
