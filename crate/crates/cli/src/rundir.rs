//! Run directories named `<command>-<config hash>-<timestamp>`.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::error::CliResult;

/// First 12 hex digits of SHA-256 over the command, extra arguments and the
/// effective config serialized as JSON.
pub fn config_hash(command: &str, extra: &str, config: &ScenarioConfig) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(extra.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(h.finalize())[..12].to_string()
}

/// Creates the run directory under `root`.
///
/// In deterministic mode the suffix is `seed<seed>` and an existing
/// directory is emptied, so identical invocations produce identical trees.
/// Otherwise the suffix is a UTC timestamp, with `-2`, `-3`, ... appended on
/// collision.
pub fn create_run_dir(
    root: &Path,
    command: &str,
    extra: &str,
    config: &ScenarioConfig,
    deterministic: bool,
) -> CliResult<PathBuf> {
    let hash = config_hash(command, extra, config);
    std::fs::create_dir_all(root)?;
    if deterministic {
        let dir = root.join(format!("{command}-{hash}-seed{}", config.seed));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        return Ok(dir);
    }
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let base = format!("{command}-{hash}-{stamp}");
    let mut dir = root.join(&base);
    let mut n = 2;
    while dir.exists() {
        dir = root.join(format!("{base}-{n}"));
        n += 1;
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config_and_args() {
        let c = ScenarioConfig::default();
        let a = config_hash("hunt", "ned", &c);
        assert_eq!(a.len(), 12);
        assert_eq!(a, config_hash("hunt", "ned", &c));
        assert_ne!(a, config_hash("hunt", "pca", &c));
        let other = ScenarioConfig { seed: 1, ..c };
        assert_ne!(a, config_hash("hunt", "ned", &other));
    }

    #[test]
    fn deterministic_dir_is_reused_and_cleared() {
        let root = tempfile::tempdir().unwrap();
        let c = ScenarioConfig::default();
        let d1 = create_run_dir(root.path(), "topology", "", &c, true).unwrap();
        std::fs::write(d1.join("stale"), "x").unwrap();
        let d2 = create_run_dir(root.path(), "topology", "", &c, true).unwrap();
        assert_eq!(d1, d2);
        assert!(!d2.join("stale").exists());
        assert!(d1.file_name().unwrap().to_str().unwrap().ends_with("-seed0"));
    }

    #[test]
    fn timestamped_dirs_do_not_collide() {
        let root = tempfile::tempdir().unwrap();
        let c = ScenarioConfig::default();
        let a = create_run_dir(root.path(), "hunt", "", &c, false).unwrap();
        let b = create_run_dir(root.path(), "hunt", "", &c, false).unwrap();
        assert_ne!(a, b);
    }
}
