use crate::{Error, Result};
use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

/// Environment variable overriding the default cache directory.
pub const CACHE_DIR_ENV: &str = "LOTTERY_CACHE_DIR";

// Writes for one dataset id are serialized; different ids proceed in parallel.
fn id_lock(id: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut locks = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    locks.entry(id.to_string()).or_default().clone()
}

fn cache_file_name(dataset_id: &str) -> String {
    let safe: String = dataset_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("{safe}.csv")
}

/// Fetch `url_template` with `{id}` replaced by `dataset_id`, caching the body
/// under `cache_dir`. A cache hit returns immediately without touching the network.
pub fn fetch_remote(url_template: &str, dataset_id: &str, cache_dir: &Path) -> Result<PathBuf> {
    let target = cache_dir.join(cache_file_name(dataset_id));
    let lock = id_lock(dataset_id);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if target.is_file() {
        return Ok(target);
    }

    let url = url_template.replace("{id}", dataset_id);
    let fail = |reason: String| Error::Fetch {
        id: dataset_id.to_string(),
        reason,
    };
    let response = ureq::get(&url).call().map_err(|e| fail(e.to_string()))?;
    let status = response.status();
    if !status.is_success() {
        return Err(fail(format!("HTTP status {status}")));
    }
    let mut body = Vec::new();
    response
        .into_body()
        .into_reader()
        .read_to_end(&mut body)
        .map_err(|e| fail(e.to_string()))?;

    std::fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let tmp = target.with_extension("csv.partial");
    std::fs::write(&tmp, &body).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_hit_skips_network() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diabetes.csv");
        std::fs::write(&path, "a,y\n1,0\n").unwrap();
        // The URL is unroutable; only a cache hit can succeed.
        let got = fetch_remote("http://invalid.invalid/{id}", "diabetes", dir.path()).unwrap();
        assert_eq!(got, path);
    }

    #[test]
    fn unknown_host_without_cache_fails() {
        let dir = tempfile::tempdir().unwrap();
        let err = fetch_remote("http://nonexistent-host.invalid/{id}.csv", "x", dir.path()).unwrap_err();
        assert!(matches!(err, Error::Fetch { .. }), "{err}");
        assert!(!dir.path().join("x.csv").exists());
    }

    #[test]
    fn ids_are_sanitized() {
        assert_eq!(cache_file_name("../etc/passwd"), ".._etc_passwd.csv");
    }
}
