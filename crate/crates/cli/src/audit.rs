//! The `audit` command: split, train, filter, attribute, compare, score.

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, Result, StageExt};
use crate::output::StagedOutput;
use crate::report::*;
use lottery_core::agreement::{
    agreement_gap, lottery_rate, lottery_rate_where, topk_disagreement, write_agreement_csv, AgreementTable,
    BootstrapSettings, PairClass,
};
use lottery_core::attribution::{KernelOptions, LinearEngine};
use lottery_core::data::{fetch_remote, generate_synthetic, load_csv, split, Dataset, SplitSpec, CACHE_DIR_ENV};
use lottery_core::pipeline::{run_split, AttributionOptions, SplitRun};
use lottery_core::reliability::{loo_validate, score_all, write_reliability_csv, Zone, DEFAULT_AGREEMENT_TAU};
use lottery_core::{rng, stats, AttributionVector, Error};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub(crate) fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("lottery")))
        .unwrap_or_else(|| PathBuf::from(".lottery-cache"))
}

pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    match &config.data {
        None => Err(CliError::Usage("no data source: pass --data or --synthetic".into())),
        Some(DataSource::Csv { path }) => load_csv(path, &config.label_col).stage("load"),
        Some(DataSource::Fetch { id, url_template }) => {
            let dir = cache_dir();
            std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
                stage: "fetch",
                path: dir.clone(),
                source,
            })?;
            let path = fetch_remote(url_template, id, &dir).stage("fetch")?;
            load_csv(path, &config.label_col).stage("load")
        }
        Some(DataSource::Synthetic { spec, rows, seed }) => generate_synthetic(spec, *rows, *seed).stage("load"),
    }
}

pub(crate) fn attribution_options(config: &RunConfig) -> AttributionOptions {
    AttributionOptions {
        kernel: KernelOptions {
            n_samples: config.kernel_samples,
            ..KernelOptions::default()
        },
        background_rows: config.background_rows,
        linear_engine: LinearEngine::Exact,
    }
}

/// Everything an audit produces, before anything is written.
pub struct AuditOutcome {
    pub report: RunReport,
    pub table: AgreementTable,
    pub agreement_csv: Vec<u8>,
    pub attributions_csv: Vec<u8>,
    pub reliability_csv: Vec<u8>,
}

fn run_seed(ds: &Dataset, config: &RunConfig, seed: u64) -> Result<SplitRun> {
    let (train, test) = split(ds, &SplitSpec::new(seed, config.train_fraction)).stage("split")?;
    let roster = config.roster()?;
    run_split(&train, &test, &roster, seed, &attribution_options(config)).map_err(|e| match e {
        Error::EmptyEquivalenceSet => CliError::EmptyEquivalence { seed },
        source => CliError::Stage {
            stage: "train/attribute",
            source,
        },
    })
}

fn lottery_rows(table: &AgreementTable, config: &RunConfig, classes: &[PairClass]) -> Result<Vec<LotteryRow>> {
    config
        .sorted_taus()
        .into_iter()
        .enumerate()
        .map(|(i, tau)| {
            let settings = BootstrapSettings {
                resamples: config.bootstrap_resamples,
                seed: rng::derive_seed(config.seeds[0], i as u64),
                ..BootstrapSettings::default()
            };
            let overall = lottery_rate(table, tau, Some(&settings)).stage("lottery")?;
            let mut by_class = BTreeMap::new();
            for &class in classes {
                if let Ok(r) = lottery_rate_where(table, tau, |r| r.pair.pair_class == class, None) {
                    by_class.insert(class, r.rate);
                }
            }
            Ok(LotteryRow {
                tau,
                rate: overall.rate,
                n_defined: overall.n_defined,
                ci: overall.ci,
                by_class,
            })
        })
        .collect()
}

fn gap_summary(table: &AgreementTable) -> Result<GapSummary> {
    let (intra, inter) = (PairClass::IntraTree, PairClass::CrossTreeLinear);
    let delta = agreement_gap(table, intra, inter).stage("gap")?;
    let a = table.rhos(intra);
    let b = table.rhos(inter);
    let test = stats::mann_whitney_u(&a, &b).stage("gap")?;
    let effects = stats::effect_sizes(&a, &b).stage("gap")?;
    Ok(GapSummary {
        intra,
        inter,
        rho_intra: stats::mean(&a),
        rho_inter: stats::mean(&b),
        delta,
        p_value: test.p_value,
        cohens_d: effects.cohens_d,
        cles: effects.cles,
    })
}

fn top_k_summary(runs: &[SplitRun], k: usize) -> Result<TopKSummary> {
    let mut counts: BTreeMap<PairClass, (usize, usize, usize)> = BTreeMap::new();
    for run in runs {
        let m = &run.attributions;
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                let class = PairClass::of(m[i].class, m[j].class);
                let entry = counts.entry(class).or_default();
                for (a, b) in m[i].vectors.iter().zip(&m[j].vectors) {
                    let t = topk_disagreement(&a.phi, &b.phi, k).stage("top-k")?;
                    entry.0 += 1;
                    entry.1 += usize::from(t.partial);
                    entry.2 += usize::from(t.complete);
                }
            }
        }
    }
    let rates = |(n, p, c): (usize, usize, usize)| TopKRates {
        n,
        partial_rate: p as f64 / n.max(1) as f64,
        complete_rate: c as f64 / n.max(1) as f64,
    };
    let total = counts
        .values()
        .fold((0, 0, 0), |acc, v| (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2));
    Ok(TopKSummary {
        k,
        overall: rates(total),
        by_class: counts.into_iter().map(|(c, v)| (c, rates(v))).collect(),
    })
}

fn attributions_csv(runs: &[SplitRun], feature_names: &[String]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model_id".to_string(), "instance_id".into(), "baseline".into(), "explained_value".into()];
    header.extend(feature_names.iter().map(|f| format!("phi_{f}")));
    let csv_err = |e: csv::Error| CliError::Stage {
        stage: "write",
        source: e.into(),
    };
    w.write_record(&header).map_err(csv_err)?;
    for run in runs {
        for m in &run.attributions {
            for v in &m.vectors {
                let mut row = vec![
                    v.model_id.clone(),
                    v.instance_id.clone(),
                    v.baseline.to_string(),
                    v.explained_value.to_string(),
                ];
                row.extend(v.phi.iter().map(f64::to_string));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.into_inner().map_err(|e| CliError::Io {
        stage: "write",
        path: "attributions.csv".into(),
        source: e.into_error(),
    })
}

/// Run the full audit in memory.
pub fn run_audit(config: &RunConfig) -> Result<AuditOutcome> {
    config.validate()?;
    let ds = load_dataset(config)?;
    let roster = config.roster()?;
    let n_train = SplitSpec::new(0, config.train_fraction).train_size(ds.n_rows()).stage("split")?;
    let mut warnings = Vec::new();

    let runs = config
        .seeds
        .iter()
        .map(|&seed| run_seed(&ds, config, seed))
        .collect::<Result<Vec<_>>>()?;

    let table = AgreementTable::merge(runs.iter().map(|r| r.table.clone()));
    let classes: Vec<PairClass> = config.pair_classes()?.into_iter().collect();

    let lottery = if table.defined().next().is_none() {
        warnings.push(if roster.len() < 2 {
            "roster has fewer than two models; agreement sections are empty".to_string()
        } else {
            "no defined agreement records; lottery rates omitted".to_string()
        });
        Vec::new()
    } else {
        lottery_rows(&table, config, &classes)?
    };

    let gap = if classes.contains(&PairClass::IntraTree) && classes.contains(&PairClass::CrossTreeLinear) {
        match gap_summary(&table) {
            Ok(g) => Some(g),
            Err(e) => {
                warnings.push(format!("agreement gap unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };

    let top_k = if roster.len() >= 2 {
        Some(top_k_summary(&runs, config.top_k.min(ds.n_features()))?)
    } else {
        None
    };

    let per_instance: Vec<Vec<AttributionVector>> = runs.iter().flat_map(SplitRun::per_instance).collect();
    let scores = score_all(&per_instance).stage("reliability")?;
    let mut zone_counts: BTreeMap<Zone, usize> = Zone::ALL.into_iter().map(|z| (z, 0)).collect();
    for s in &scores {
        *zone_counts.get_mut(&s.zone).expect("all zones present") += 1;
    }
    let rs: Vec<f64> = scores.iter().map(|s| s.r).collect();
    let loo = if roster.len() >= 3 {
        Some(loo_validate(&per_instance, DEFAULT_AGREEMENT_TAU).stage("reliability")?)
    } else {
        warnings.push("leave-one-out validation needs at least three models".into());
        None
    };

    let mut agreement_csv = Vec::new();
    write_agreement_csv(&table, &mut agreement_csv).stage("write")?;
    let mut reliability_csv = Vec::new();
    write_reliability_csv(&scores, &mut reliability_csv).stage("write")?;

    let config_json = serde_json::to_vec(config).expect("config serializes");
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        generated_unix: config.timestamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        }),
        config: config.clone(),
        config_digest: lottery_core::short_digest(&config_json),
        dataset: DatasetSummary {
            id: ds.id.clone(),
            n_rows: ds.n_rows(),
            n_features: ds.n_features(),
            feature_names: ds.feature_names().to_vec(),
            positive_rate: ds.positive_rate(),
        },
        roster: runs[0]
            .models
            .iter()
            .map(|m| RosterSummary {
                id: m.id.clone(),
                class: m.model.hypothesis_class,
                config_digest: m.model.config_digest.clone(),
            })
            .collect(),
        seeds: runs
            .iter()
            .map(|r| SeedSummary {
                seed: r.seed,
                n_train,
                n_test: ds.n_rows() - n_train,
                n_equivalent: r.equivalent.len(),
                coverage: r.equivalent.coverage_fraction,
                test_accuracy: r.models.iter().zip(&r.test_accuracy).map(|(m, a)| (m.id.clone(), *a)).collect(),
            })
            .collect(),
        agreement: AgreementSummary {
            n_records: table.records.len(),
            undefined_count: table.undefined_count,
            by_class: table.by_class.clone(),
            by_pair: table.by_pair.clone(),
        },
        lottery,
        gap,
        top_k,
        reliability: ReliabilitySummary {
            n_instances: scores.len(),
            mean_r: (!rs.is_empty()).then(|| stats::mean(&rs)),
            zone_counts,
        },
        loo,
        warnings,
    };
    Ok(AuditOutcome {
        attributions_csv: attributions_csv(&runs, ds.feature_names())?,
        report,
        table,
        agreement_csv,
        reliability_csv,
    })
}

/// Run the audit and write `report.json`, `agreement.csv`,
/// `attributions.csv` and `reliability.csv` into the output directory.
pub fn cmd_audit(config: &RunConfig) -> Result<RunReport> {
    let outcome = run_audit(config)?;
    let mut out = StagedOutput::new(&config.out)?;
    let mut json = serde_json::to_vec_pretty(&outcome.report).expect("report serializes");
    json.push(b'\n');
    out.add("report.json", &json)?;
    out.add("agreement.csv", &outcome.agreement_csv)?;
    out.add("attributions.csv", &outcome.attributions_csv)?;
    out.add("reliability.csv", &outcome.reliability_csv)?;
    out.commit()?;
    Ok(outcome.report)
}
