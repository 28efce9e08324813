//! Command-line front end: configuration, the audit pipeline, synthetic
//! experiments, instance scoring and report rendering.

pub mod audit;
pub mod config;
mod error;
mod output;
pub mod report;
pub mod score;
pub mod synth;

pub use audit::{cmd_audit, run_audit, AuditOutcome};
pub use config::{DataSource, Overrides, RunConfig};
pub use error::{CliError, Result};
pub use report::{render_run, RunReport};
pub use score::cmd_reliability;
pub use synth::{cmd_synth, render_synth, Experiment, SynthOptions, SynthReport};

use std::path::{Path, PathBuf};

/// Download `id` into the cache directory (or reuse the cached copy).
pub fn cmd_fetch(id: &str, url_template: &str) -> Result<PathBuf> {
    let dir = audit::cache_dir();
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        stage: "fetch",
        path: dir.clone(),
        source,
    })?;
    lottery_core::data::fetch_remote(url_template, id, &dir).map_err(|source| CliError::Stage {
        stage: "fetch",
        source,
    })
}

/// Render a saved `report.json` (audit) or `synth.json` (experiment).
pub fn cmd_report(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        stage: "report",
        path: path.to_path_buf(),
        source,
    })?;
    if let Ok(run) = serde_json::from_str::<RunReport>(&text) {
        return Ok(render_run(&run));
    }
    serde_json::from_str::<SynthReport>(&text)
        .map(|s| render_synth(&s))
        .map_err(|e| CliError::Stage {
            stage: "report",
            source: e.into(),
        })
}
