//! Run configuration. Precedence: command-line flags, then a flat
//! `key = value` config file, then defaults.

use crate::error::{CliError, Result};
use lottery_core::agreement::PairClass;
use lottery_core::data::SyntheticSpec;
use lottery_core::pipeline::{preset, RosterEntry};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub const DEFAULT_FETCH_URL: &str = "https://www.openml.org/data/get_csv/{id}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf },
    Fetch { id: String, url_template: String },
    Synthetic { spec: SyntheticSpec, rows: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: Option<DataSource>,
    pub label_col: String,
    pub models: Vec<String>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub taus: Vec<f64>,
    pub kernel_samples: usize,
    pub background_rows: usize,
    pub bootstrap_resamples: usize,
    pub top_k: usize,
    /// Output directory; not part of the report so relocating a run does not change it.
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub timestamp: bool,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            label_col: "label".into(),
            models: ["gbt", "gbt2", "forest", "cart", "logistic", "ridge"].map(String::from).to_vec(),
            seeds: vec![42, 123, 456],
            train_fraction: 0.8,
            taus: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            kernel_samples: 1000,
            background_rows: 100,
            bootstrap_resamples: 10_000,
            top_k: 3,
            out: PathBuf::from("lottery-out"),
            timestamp: true,
            jobs: None,
        }
    }
}

/// Partial configuration from one source; unset fields defer to the next.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data: Option<String>,
    pub fetch_url: Option<String>,
    pub synthetic: Option<PathBuf>,
    pub synthetic_rows: Option<usize>,
    pub synthetic_seed: Option<u64>,
    pub label_col: Option<String>,
    pub models: Option<String>,
    pub seeds: Option<String>,
    pub train_frac: Option<f64>,
    pub tau: Option<String>,
    pub kernel_samples: Option<usize>,
    pub background_rows: Option<usize>,
    pub bootstrap_resamples: Option<usize>,
    pub top_k: Option<usize>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub no_timestamp: Option<bool>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{value}` for `{key}`")))
}

impl Overrides {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut o = Overrides::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim().to_string());
            match key {
                "data" => o.data = Some(value),
                "fetch_url" => o.fetch_url = Some(value),
                "synthetic" => o.synthetic = Some(PathBuf::from(value)),
                "synthetic_rows" => o.synthetic_rows = Some(parse_value(key, &value)?),
                "synthetic_seed" => o.synthetic_seed = Some(parse_value(key, &value)?),
                "label_col" => o.label_col = Some(value),
                "models" => o.models = Some(value),
                "seeds" => o.seeds = Some(value),
                "train_frac" => o.train_frac = Some(parse_value(key, &value)?),
                "tau" => o.tau = Some(value),
                "kernel_samples" => o.kernel_samples = Some(parse_value(key, &value)?),
                "background_rows" => o.background_rows = Some(parse_value(key, &value)?),
                "bootstrap_resamples" => o.bootstrap_resamples = Some(parse_value(key, &value)?),
                "top_k" => o.top_k = Some(parse_value(key, &value)?),
                "out" => o.out = Some(PathBuf::from(value)),
                "jobs" => o.jobs = Some(parse_value(key, &value)?),
                "no_timestamp" => o.no_timestamp = Some(parse_value(key, &value)?),
                _ => return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", n + 1))),
            }
        }
        Ok(o)
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            stage: "config",
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_config_text(&text)
    }
}

fn split_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl RunConfig {
    /// Apply `layers` in increasing precedence.
    pub fn resolve(layers: &[Overrides]) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut data: Option<String> = None;
        let mut fetch_url = DEFAULT_FETCH_URL.to_string();
        let mut synthetic: Option<PathBuf> = None;
        let mut synthetic_rows = 1000;
        let mut synthetic_seed = 0;
        for o in layers {
            if o.data.is_some() {
                data.clone_from(&o.data);
                synthetic = None;
            }
            if o.synthetic.is_some() {
                synthetic.clone_from(&o.synthetic);
                data = None;
            }
            if let Some(v) = &o.fetch_url {
                fetch_url.clone_from(v);
            }
            synthetic_rows = o.synthetic_rows.unwrap_or(synthetic_rows);
            synthetic_seed = o.synthetic_seed.unwrap_or(synthetic_seed);
            if let Some(v) = &o.label_col {
                c.label_col.clone_from(v);
            }
            if let Some(v) = &o.models {
                c.models = split_list("models", v)?;
            }
            if let Some(v) = &o.seeds {
                c.seeds = split_list("seeds", v)?;
            }
            c.train_fraction = o.train_frac.unwrap_or(c.train_fraction);
            if let Some(v) = &o.tau {
                c.taus = split_list("tau", v)?;
            }
            c.kernel_samples = o.kernel_samples.unwrap_or(c.kernel_samples);
            c.background_rows = o.background_rows.unwrap_or(c.background_rows);
            c.bootstrap_resamples = o.bootstrap_resamples.unwrap_or(c.bootstrap_resamples);
            c.top_k = o.top_k.unwrap_or(c.top_k);
            if let Some(v) = &o.out {
                c.out.clone_from(v);
            }
            if o.jobs.is_some() {
                c.jobs = o.jobs;
            }
            if let Some(v) = o.no_timestamp {
                c.timestamp = !v;
            }
        }
        c.data = match (data, synthetic) {
            (Some(d), _) => Some(match d.strip_prefix("fetch:") {
                Some(id) => DataSource::Fetch {
                    id: id.to_string(),
                    url_template: fetch_url,
                },
                None => DataSource::Csv { path: PathBuf::from(d) },
            }),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
                    stage: "config",
                    path: path.clone(),
                    source,
                })?;
                let spec: SyntheticSpec = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("synthetic spec {}: {e}", path.display())))?;
                Some(DataSource::Synthetic {
                    spec,
                    rows: synthetic_rows,
                    seed: synthetic_seed,
                })
            }
            (None, None) => None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(CliError::Usage("at least one model is required".into()));
        }
        let unique: BTreeSet<&String> = self.models.iter().collect();
        if unique.len() != self.models.len() {
            return Err(CliError::Usage("model names must be unique".into()));
        }
        self.roster()?;
        if self.seeds.is_empty() {
            return Err(CliError::Usage("at least one seed is required".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Usage("train fraction must lie in (0, 1)".into()));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > -1.0 && **t < 1.0)) {
            return Err(CliError::Usage(format!("tau {t} outside (-1, 1)")));
        }
        if self.kernel_samples == 0 || self.background_rows == 0 || self.top_k == 0 {
            return Err(CliError::Usage("sample counts and top-k must be positive".into()));
        }
        if self.bootstrap_resamples < 2 {
            return Err(CliError::Usage("bootstrap needs at least 2 resamples".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn roster(&self) -> Result<Vec<RosterEntry>> {
        self.models
            .iter()
            .map(|m| preset(m).ok_or_else(|| CliError::Usage(format!("unknown model `{m}`"))))
            .collect()
    }

    /// Pair classes the roster can populate.
    pub fn pair_classes(&self) -> Result<BTreeSet<PairClass>> {
        let classes: Vec<_> = self.roster()?.iter().map(|e| e.config.hypothesis_class()).collect();
        let mut out = BTreeSet::new();
        for i in 0..classes.len() {
            for j in i + 1..classes.len() {
                out.insert(PairClass::of(classes[i], classes[j]));
            }
        }
        Ok(out)
    }

    pub fn sorted_taus(&self) -> Vec<f64> {
        let mut t = self.taus.clone();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&[]).unwrap();
        assert_eq!(c.seeds, vec![42, 123, 456]);
        assert_eq!(c.taus.len(), 6);
        assert_eq!(c.train_fraction, 0.8);
        assert_eq!(c.kernel_samples, 1000);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = Overrides::from_config_text("# comment\nseeds = 1, 2\ntrain_frac = 0.7\n\ntau=0.5").unwrap();
        let flags = Overrides {
            seeds: Some("9".into()),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(&[file, flags]).unwrap();
        assert_eq!(c.seeds, vec![9]);
        assert_eq!(c.train_fraction, 0.7);
        assert_eq!(c.taus, vec![0.5]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Overrides::from_config_text("bogus = 1").is_err());
        assert!(Overrides::from_config_text("seeds").is_err());
        let bad_tau = Overrides {
            tau: Some("1.0".into()),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(&[bad_tau]).is_err());
        let bad_model = Overrides {
            models: Some("gbt,svm".into()),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(&[bad_model]).is_err());
    }

    #[test]
    fn fetch_prefix_selects_remote_source() {
        let o = Overrides {
            data: Some("fetch:adult".into()),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(&[o]).unwrap();
        assert!(matches!(c.data, Some(DataSource::Fetch { ref id, .. }) if id == "adult"));
    }

    #[test]
    fn pair_classes_of_default_roster() {
        let classes = RunConfig::default().pair_classes().unwrap();
        assert!(classes.contains(&PairClass::IntraTree));
        assert!(classes.contains(&PairClass::CrossTreeLinear));
        assert!(!classes.contains(&PairClass::IntraNeural));
    }
}
