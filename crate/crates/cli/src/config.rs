//! Scenario configuration: one JSON document with a section per component.

use std::path::{Path, PathBuf};

use blockhunter_core::chainsim::SimConfig;
use blockhunter_core::detectors::HuntThreshold;
use blockhunter_core::federation::FederatedConfig;
use blockhunter_core::ingest::{CsvSchema, ShardStrategy};
use blockhunter_core::topology::TopologyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Where `hunt` gets its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Simulated transactions, one client per cluster.
    Sim,
    /// A labeled CSV export; paths are relative to the config file.
    Csv {
        path: PathBuf,
        schema: PathBuf,
        #[serde(default = "default_shard")]
        shard: ShardStrategy,
    },
    /// The Gaussian blob benchmark.
    Synth {
        n: usize,
        d: usize,
        contamination: f64,
        separation: f64,
        #[serde(default = "default_shard")]
        shard: ShardStrategy,
    },
}

fn default_shard() -> ShardStrategy {
    ShardStrategy::IidUniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed for every random stream of a run.
    pub seed: u64,
    pub topology: TopologyConfig,
    pub sim: SimConfig,
    pub federation: FederatedConfig,
    pub hunt: HuntThreshold,
    pub data: DataSource,
    /// Seeds per sweep cell, `seed`, `seed + 1`, ...
    pub sweep_seeds: usize,
    pub bandwidth_window_s: f64,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            topology: TopologyConfig::default(),
            sim: SimConfig::default(),
            federation: FederatedConfig::default(),
            hunt: HuntThreshold::default(),
            data: DataSource::Sim,
            sweep_seeds: 20,
            bandwidth_window_s: 10.0,
            output_dir: PathBuf::from("runs"),
        }
    }
}

/// One problem found by validation, located by its JSON path.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn defaults() -> Self {
        Self {
            config: ScenarioConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Output root: `BLOCKHUNTER_OUT` when set, else `output_dir` from the config.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os("BLOCKHUNTER_OUT") {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.resolve(&self.config.output_dir),
        }
    }

    /// Checks every section without running anything.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let c = &self.config;
        let mut out = Vec::new();
        let mut push = |path: &str, message: String| {
            out.push(Diagnostic {
                path: path.to_string(),
                message,
            })
        };
        let t = &c.topology;
        if t.clusters == 0 {
            push("topology.clusters", "must be >= 1".into());
        } else if t.factories < t.clusters {
            push(
                "topology.factories",
                format!("TooFewFactories: {} factories cannot form {} clusters", t.factories, t.clusters),
            );
        }
        if !(t.side > 0.0) || !(t.device_sigma >= 0.0) {
            push("topology", "side must be positive and device_sigma non-negative".into());
        }
        if let Err(e) = c.sim.validate() {
            push("sim", e.to_string());
        }
        if c.sim.miner_count > t.factories {
            push(
                "sim.miner_count",
                format!("{} miners exceed topology.factories = {}", c.sim.miner_count, t.factories),
            );
        }
        if let Err(e) = c.federation.validate() {
            push("federation", e.to_string());
        }
        if c.federation.clusters != t.clusters {
            push(
                "federation.clusters",
                format!(
                    "federation.clusters = {} differs from topology.clusters = {}",
                    c.federation.clusters, t.clusters
                ),
            );
        }
        let det = &c.federation.detector;
        if let Err(e) = det.ned.validate() {
            push("federation.detector.ned", e.to_string());
        }
        if let Err(e) = det.cblof.validate() {
            push("federation.detector.cblof", e.to_string());
        }
        if det.iforest.trees == 0 || det.iforest.subsample < 2 {
            push("federation.detector.iforest", "needs trees >= 1 and subsample >= 2".into());
        }
        if det.kmeans.k == 0 {
            push("federation.detector.kmeans.k", "must be >= 1".into());
        }
        if let Err(e) = c.hunt.validate() {
            push("hunt", e.to_string());
        }
        if c.sweep_seeds == 0 {
            push("sweep_seeds", "must be >= 1".into());
        }
        if !(c.bandwidth_window_s > 0.0) {
            push("bandwidth_window_s", "must be positive".into());
        }
        match &c.data {
            DataSource::Sim => {}
            DataSource::Csv { path, schema, .. } => {
                let data_path = self.resolve(path);
                if !data_path.is_file() {
                    push("data.path", format!("FileNotFound: {}", data_path.display()));
                }
                match CsvSchema::load(&self.resolve(schema)) {
                    Ok(s) => {
                        if data_path.is_file() {
                            if let Err(e) = check_header(&data_path, &s) {
                                push("data.path", e);
                            }
                        }
                    }
                    Err(e) => push("data.schema", e.to_string()),
                }
            }
            DataSource::Synth {
                n,
                d,
                contamination,
                separation,
                ..
            } => {
                if *n == 0 || *d == 0 {
                    push("data", "n and d must be >= 1".into());
                }
                if !(*contamination > 0.0 && *contamination < 0.5) {
                    push("data.contamination", "must lie in (0, 0.5)".into());
                }
                if !(*separation > 0.0) {
                    push("data.separation", "must be positive".into());
                }
                if c.federation.clusters > *n {
                    push(
                        "federation.clusters",
                        format!("KTooLarge: {} shards for {} samples", c.federation.clusters, n),
                    );
                }
            }
        }
        out
    }

    /// Fails with every diagnostic joined, or passes.
    pub fn validate(&self) -> CliResult<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            return Ok(());
        }
        Err(CliError::Config(
            d.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"),
        ))
    }
}

/// Header check only; rows are not parsed.
fn check_header(path: &Path, schema: &CsvSchema) -> Result<(), String> {
    let mut r = csv_reader(path, schema).map_err(|e| e.to_string())?;
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let mut wanted: Vec<&str> = schema.feature_columns.iter().map(String::as_str).collect();
    wanted.push(&schema.label_column);
    wanted.extend(schema.id_column.as_deref());
    wanted.extend(schema.group_column.as_deref());
    match wanted.iter().find(|w| !headers.iter().any(|h| h.trim() == **w)) {
        Some(missing) => Err(format!("SchemaMismatch: column `{missing}` not found")),
        None => Ok(()),
    }
}

fn csv_reader(path: &Path, schema: &CsvSchema) -> std::io::Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_reader(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(f: impl FnOnce(&mut ScenarioConfig)) -> LoadedConfig {
        let mut l = LoadedConfig::defaults();
        f(&mut l.config);
        l
    }

    #[test]
    fn defaults_validate() {
        assert!(LoadedConfig::defaults().diagnostics().is_empty());
    }

    #[test]
    fn committed_defaults_match() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("defaults.json");
        assert_eq!(LoadedConfig::load(&path).unwrap().config, ScenarioConfig::default());
    }

    #[test]
    fn cluster_mismatch_names_both_paths() {
        let d = with(|c| c.federation.clusters = 30).diagnostics();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "federation.clusters");
        assert!(d[0].message.contains("topology.clusters"));
    }

    #[test]
    fn zero_duration_rejected() {
        let d = with(|c| c.sim.duration_s = 0.0).diagnostics();
        assert!(d.iter().any(|d| d.path == "sim" && d.message.contains("duration_s")));
    }

    #[test]
    fn missing_csv_is_file_not_found() {
        let d = with(|c| {
            c.data = DataSource::Csv {
                path: "/nonexistent/a.csv".into(),
                schema: "/nonexistent/a.json".into(),
                shard: ShardStrategy::IidUniform,
            }
        })
        .diagnostics();
        assert!(d.iter().any(|d| d.path == "data.path" && d.message.starts_with("FileNotFound")));
    }

    #[test]
    fn unknown_field_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"sed": 3}"#).unwrap();
        assert_eq!(LoadedConfig::load(&p).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn too_few_factories() {
        let d = with(|c| {
            c.topology.clusters = 300;
            c.federation.clusters = 300;
        })
        .diagnostics();
        assert!(d.iter().any(|d| d.message.contains("TooFewFactories")));
    }
}
