use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: lottery_core::Error,
    },
    #[error("[filter] seed {seed}: no test instance is labeled identically by every model")]
    EmptyEquivalence { seed: u64 },
    #[error("[{stage}] {path}: {source}")]
    Io {
        stage: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for an empty equivalence set, 1 for every other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::EmptyEquivalence { .. } => 2,
            _ => 1,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for lottery_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::EmptyEquivalence { seed: 1 }.exit_code(), 2);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        let stage = CliError::Stage {
            stage: "load",
            source: lottery_core::Error::Empty("no rows".into()),
        };
        assert_eq!(stage.exit_code(), 1);
        assert!(stage.to_string().starts_with("[load]"));
    }
}
