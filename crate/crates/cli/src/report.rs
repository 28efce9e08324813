//! Versioned JSON run report and its plain-text rendering.

use crate::config::RunConfig;
use lottery_core::agreement::{Aggregate, PairClass};
use lottery_core::reliability::{LooReport, Zone};
use lottery_core::stats::Interval;
use lottery_core::HypothesisClass;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
    pub config: RunConfig,
    pub config_digest: String,
    pub dataset: DatasetSummary,
    pub roster: Vec<RosterSummary>,
    pub seeds: Vec<SeedSummary>,
    pub agreement: AgreementSummary,
    pub lottery: Vec<LotteryRow>,
    pub gap: Option<GapSummary>,
    pub top_k: Option<TopKSummary>,
    pub reliability: ReliabilitySummary,
    pub loo: Option<LooReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterSummary {
    pub id: String,
    pub class: HypothesisClass,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_equivalent: usize,
    pub coverage: f64,
    pub test_accuracy: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub n_records: usize,
    pub undefined_count: usize,
    pub by_class: BTreeMap<PairClass, Aggregate>,
    pub by_pair: BTreeMap<String, Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryRow {
    pub tau: f64,
    pub rate: f64,
    pub n_defined: usize,
    pub ci: Option<Interval>,
    pub by_class: BTreeMap<PairClass, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub intra: PairClass,
    pub inter: PairClass,
    pub rho_intra: f64,
    pub rho_inter: f64,
    pub delta: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub cles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKRates {
    pub n: usize,
    pub partial_rate: f64,
    pub complete_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKSummary {
    pub k: usize,
    pub overall: TopKRates,
    pub by_class: BTreeMap<PairClass, TopKRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySummary {
    pub n_instances: usize,
    pub mean_r: Option<f64>,
    pub zone_counts: BTreeMap<Zone, usize>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Plain-text tables: agreement per pair class, lottery rate per tau, gap,
/// top-k, reliability zones.
pub fn render_run(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dataset {} ({} rows, {} features)", r.dataset.id, r.dataset.n_rows, r.dataset.n_features);
    let models: Vec<&str> = r.roster.iter().map(|m| m.id.as_str()).collect();
    let _ = writeln!(s, "roster  {}", models.join(", "));
    for seed in &r.seeds {
        let _ = writeln!(
            s,
            "seed {:<6} equivalent {}/{} ({:.1}%)",
            seed.seed,
            seed.n_equivalent,
            seed.n_test,
            100.0 * seed.coverage
        );
    }
    let _ = writeln!(s, "\n{:<22} {:>7} {:>7} {:>7} {:>7} {:>9}", "pair class", "mean", "median", "sd", "n", "undefined");
    for (class, a) in &r.agreement.by_class {
        let _ = writeln!(
            s,
            "{:<22} {:>7} {:>7} {:>7} {:>7} {:>9}",
            class.as_str(),
            opt(a.mean),
            opt(a.median),
            opt(a.sd),
            a.count,
            a.undefined
        );
    }
    if !r.lottery.is_empty() {
        let _ = writeln!(s, "\n{:>6} {:>8} {:>17} {:>8}", "tau", "L(tau)", "95% CI", "pairs");
        for row in &r.lottery {
            let ci = row
                .ci
                .map_or_else(|| "-".to_string(), |c| format!("[{:.3}, {:.3}]", c.lo, c.hi));
            let _ = writeln!(s, "{:>6.2} {:>8.3} {:>17} {:>8}", row.tau, row.rate, ci, row.n_defined);
        }
    }
    if let Some(g) = &r.gap {
        let _ = writeln!(
            s,
            "\ngap {} - {}: {:.3} - {:.3} = {:.3} (p = {:.2e}, d = {:.2}, CLES = {:.3})",
            g.intra, g.inter, g.rho_intra, g.rho_inter, g.delta, g.p_value, g.cohens_d, g.cles
        );
    }
    if let Some(t) = &r.top_k {
        let _ = writeln!(
            s,
            "\ntop-{} disagreement: partial {:.3}, complete {:.3} over {} comparisons",
            t.k, t.overall.partial_rate, t.overall.complete_rate, t.overall.n
        );
    }
    let zones: Vec<String> = r
        .reliability
        .zone_counts
        .iter()
        .map(|(z, c)| format!("{z} {c}"))
        .collect();
    let _ = writeln!(
        s,
        "\nreliability over {} instances: mean R {} ({})",
        r.reliability.n_instances,
        opt(r.reliability.mean_r),
        zones.join(", ")
    );
    if let Some(loo) = &r.loo {
        for (zone, z) in &loo.zones {
            let _ = writeln!(
                s,
                "  held-out agreement {:<9} {} over {} trials",
                zone.as_str(),
                opt(z.agreement_probability),
                z.count
            );
        }
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
