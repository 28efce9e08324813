//! The `reliability` command: score user-supplied instances against a roster
//! trained on the configured data.

use crate::audit::{attribution_options, load_dataset};
use crate::config::RunConfig;
use crate::error::{CliError, Result, StageExt};
use crate::output::StagedOutput;
use lottery_core::attribution::{explain, BackgroundSet, ExplainContext, KernelOptions, Scale};
use lottery_core::pipeline::train_roster;
use lottery_core::reliability::{reliability_score, write_reliability_csv, ReliabilityResult, Zone};
use lottery_core::Error;
use std::collections::BTreeMap;
use std::path::Path;

/// Read instances whose header names every training feature; other columns
/// (such as the label) are ignored. Rows are identified as `row<N>`, 1-based.
pub fn read_instances(path: &Path, feature_names: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Stage {
            stage: "instances",
            source: e.into(),
        })?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::Stage {
            stage: "instances",
            source: e.into(),
        })?
        .clone();
    let columns: Vec<usize> = feature_names
        .iter()
        .map(|f| {
            header.iter().position(|h| h == f).ok_or_else(|| CliError::Stage {
                stage: "instances",
                source: Error::MissingColumn(f.clone()),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Stage {
            stage: "instances",
            source: e.into(),
        })?;
        if rec.len() != header.len() {
            return Err(CliError::Stage {
                stage: "instances",
                source: Error::InvalidInput(format!(
                    "row {row} has {} values, expected {}",
                    rec.len(),
                    header.len()
                )),
            });
        }
        let x = columns
            .iter()
            .map(|&c| {
                rec[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::Stage {
                        stage: "instances",
                        source: Error::NonNumeric {
                            row,
                            column: header[c].to_string(),
                            value: rec[c].to_string(),
                        },
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push((format!("row{row}"), x));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub results: Vec<ReliabilityResult>,
    pub zone_counts: BTreeMap<Zone, usize>,
}

/// Train the roster on the whole dataset with the first seed, score each
/// instance and write `reliability.csv`.
pub fn cmd_reliability(config: &RunConfig, instances: &Path) -> Result<ScoreOutcome> {
    config.validate()?;
    let ds = load_dataset(config)?;
    let rows = read_instances(instances, ds.feature_names())?;
    let seed = config.seeds[0];
    let models = train_roster(&ds, &config.roster()?, seed).stage("train")?;
    let opts = attribution_options(config);
    let ctx = ExplainContext {
        background: BackgroundSet::sample(&ds, opts.background_rows, seed).stage("attribute")?,
        kernel: KernelOptions {
            seed: lottery_core::rng::derive_seed(opts.kernel.seed, seed),
            ..opts.kernel
        },
        linear_engine: opts.linear_engine,
        scale: Scale::Margin,
    };
    let results = rows
        .iter()
        .enumerate()
        .map(|(i, (id, x))| {
            let attrs = models
                .iter()
                .enumerate()
                .map(|(m, named)| {
                    explain(&named.model, x, &ctx, (m as u64) << 32 | i as u64).map(|a| a.labeled(&named.id, id))
                })
                .collect::<lottery_core::Result<Vec<_>>>()
                .stage("attribute")?;
            reliability_score(&attrs).stage("reliability")
        })
        .collect::<Result<Vec<_>>>()?;
    let mut zone_counts: BTreeMap<Zone, usize> = Zone::ALL.into_iter().map(|z| (z, 0)).collect();
    for r in &results {
        *zone_counts.get_mut(&r.zone).expect("all zones present") += 1;
    }
    let mut csv = Vec::new();
    write_reliability_csv(&results, &mut csv).stage("write")?;
    let mut out = StagedOutput::new(&config.out)?;
    out.add("reliability.csv", &csv)?;
    out.commit()?;
    Ok(ScoreOutcome { results, zone_counts })
}
