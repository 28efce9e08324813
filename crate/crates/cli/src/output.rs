use crate::error::{CliError, Result};
use std::fs;
use std::path::{Path, PathBuf};

/// Files staged next to their destination and renamed into place only once
/// every one of them has been written, so a failed run leaves no partial output.
pub struct StagedOutput {
    dir: PathBuf,
    staged: Vec<(PathBuf, PathBuf)>,
}

impl StagedOutput {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            stage: "write",
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            staged: Vec::new(),
        })
    }

    pub fn add(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.partial"));
        fs::write(&tmp, bytes).map_err(|source| CliError::Io {
            stage: "write",
            path: tmp.clone(),
            source,
        })?;
        self.staged.push((tmp, target));
        Ok(())
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let staged = std::mem::take(&mut self.staged);
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, target) in staged {
            fs::rename(&tmp, &target).map_err(|source| CliError::Io {
                stage: "write",
                path: target.clone(),
                source,
            })?;
            written.push(target);
        }
        Ok(written)
    }
}

impl Drop for StagedOutput {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
    }
}
