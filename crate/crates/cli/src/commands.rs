//! The four commands. Each writes its outputs under a fresh run directory
//! and returns an in-memory outcome for printing or further checks.

use std::io::Write;
use std::path::{Path, PathBuf};

use blockhunter_core::chainsim::export::write_trace_bundle;
use blockhunter_core::chainsim::{extract_features, measure_bandwidth, run_sim, Flavor, SimTrace};
use blockhunter_core::detectors::score_to_label;
use blockhunter_core::federation::{federated_scaler, Federation, RoundLog};
use blockhunter_core::ingest::{load_csv, shard, synth_benchmark, CsvSchema, ShardPlan, ShardStrategy};
use blockhunter_core::metrics::{MetricsReport, RecallConvention};
use blockhunter_core::topology::{build_topology, ClusterTopology};
use blockhunter_core::{Dataset, DetectorKind, SeededRng, Stream};
use serde::Serialize;

use crate::config::{DataSource, LoadedConfig};
use crate::error::{CliError, CliResult};
use crate::rundir::create_run_dir;
use crate::sweep::{expand_grid, run_grid, SimRow, SweepAxis, SweepResult, ROW_COLUMNS};

/// A loaded config plus the flags shared by every command.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub loaded: LoadedConfig,
    /// Run directory named by seed instead of time, round durations zeroed.
    pub deterministic: bool,
}

impl Invocation {
    fn check(&self, sections: &[&str]) -> CliResult<()> {
        let found: Vec<String> = self
            .loaded
            .diagnostics()
            .into_iter()
            .filter(|d| sections.iter().any(|s| d.path == *s || d.path.starts_with(&format!("{s}."))))
            .map(|d| d.to_string())
            .collect();
        if found.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(found.join("\n")))
        }
    }

    fn run_dir(&self, command: &str, extra: &str) -> CliResult<PathBuf> {
        let dir = create_run_dir(
            &self.loaded.output_root(),
            command,
            extra,
            &self.loaded.config,
            self.deterministic,
        )?;
        write_json(&dir.join("config.json"), &self.loaded.config)?;
        Ok(dir)
    }

    fn topology(&self) -> CliResult<ClusterTopology> {
        let c = &self.loaded.config;
        Ok(build_topology(&c.topology, &mut SeededRng::new(c.seed, Stream::Topology))?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Clone)]
pub struct TopologyOutcome {
    pub dir: PathBuf,
    pub topology: ClusterTopology,
}

impl TopologyOutcome {
    pub fn print(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let t = &self.topology;
        writeln!(
            out,
            "{} clusters over {} factories and {} devices",
            t.cluster_count(),
            t.factories,
            t.nodes.len() - t.factories
        )?;
        writeln!(out, "wrote {}", self.dir.display())
    }
}

/// Builds the clustered topology and writes `topology.json` and `clusters.csv`.
pub fn cmd_topology(inv: &Invocation) -> CliResult<TopologyOutcome> {
    inv.check(&["topology"])?;
    let topology = inv.topology()?;
    let dir = inv.run_dir("topology", "")?;
    topology.save_json(&dir.join("topology.json"))?;
    let mut w = csv::Writer::from_path(dir.join("clusters.csv")).map_err(runtime)?;
    w.write_record(["cluster", "head", "factories", "devices"]).map_err(runtime)?;
    let devices = topology.devices_per_cluster();
    for (k, members) in topology.clusters.iter().enumerate() {
        w.write_record([
            k.to_string(),
            topology.heads[k].to_string(),
            members.len().to_string(),
            devices[k].to_string(),
        ])
        .map_err(runtime)?;
    }
    w.flush()?;
    Ok(TopologyOutcome { dir, topology })
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub dir: PathBuf,
    /// Present for a single run.
    pub row: Option<SimRow>,
    /// Present when sweeping.
    pub sweep: Option<SweepResult>,
}

impl SimulateOutcome {
    pub fn print(&self, out: &mut dyn Write) -> std::io::Result<()> {
        if let Some(r) = &self.row {
            writeln!(
                out,
                "blocks {} (height {}, forks {}), confirmed {} of {} transactions, throughput {:.3} tx/s, mean bandwidth {:.4} MB/s",
                r.blocks, r.main_chain_height, r.forks, r.confirmed_txs, r.transactions, r.throughput_tx_s, r.mean_bandwidth_mb_s
            )?;
        }
        if let Some(s) = &self.sweep {
            s.print_summary(out)?;
        }
        writeln!(out, "wrote {}", self.dir.display())
    }
}

/// One simulation with its trace bundle, or a seed-averaged sweep grid.
pub fn cmd_simulate(inv: &Invocation, sweeps: &[String]) -> CliResult<SimulateOutcome> {
    inv.check(&["topology", "sim", "sweep_seeds", "bandwidth_window_s"])?;
    let c = &inv.loaded.config;
    if c.sim.miner_count > c.topology.factories {
        return Err(CliError::Config(format!(
            "sim.miner_count {} exceeds topology.factories {}",
            c.sim.miner_count, c.topology.factories
        )));
    }
    let axes = sweeps.iter().map(|s| SweepAxis::parse(s)).collect::<CliResult<Vec<_>>>()?;
    if axes.is_empty() {
        let topology = inv.topology()?;
        let dir = inv.run_dir("simulate", "")?;
        let trace = run_sim(&c.sim, &topology, c.seed)?;
        write_trace_bundle(&trace, &dir.join("trace"))?;
        let row = SimRow::measure(&trace, c.seed, c.bandwidth_window_s);
        let mut w = csv::Writer::from_path(dir.join("metrics.csv")).map_err(runtime)?;
        let mut header = vec!["mode"];
        header.extend(ROW_COLUMNS);
        w.write_record(&header).map_err(runtime)?;
        let mut rec = vec![mode_name(&trace).to_string()];
        rec.extend(row.fields());
        w.write_record(rec).map_err(runtime)?;
        w.flush()?;
        let bw = measure_bandwidth(&trace, c.bandwidth_window_s);
        let mut w = csv::Writer::from_path(dir.join("bandwidth.csv")).map_err(runtime)?;
        w.write_record(["window_start_s", "mb_per_s"]).map_err(runtime)?;
        for (i, v) in bw.mb_per_s.iter().enumerate() {
            w.write_record([(i as f64 * bw.window_s).to_string(), v.to_string()]).map_err(runtime)?;
        }
        w.flush()?;
        return Ok(SimulateOutcome {
            dir,
            row: Some(row),
            sweep: None,
        });
    }
    let cells = expand_grid(&c.sim, &axes)?;
    for cell in &cells {
        if cell.config.miner_count > c.topology.factories {
            return Err(CliError::Config(format!(
                "sweep asks for {} miners but topology.factories = {}",
                cell.config.miner_count, c.topology.factories
            )));
        }
    }
    let seeds: Vec<u64> = (0..c.sweep_seeds as u64).map(|i| c.seed + i).collect();
    let dir = inv.run_dir("simulate", &sweeps.join(" "))?;
    let result = run_grid(
        &c.topology,
        &cells,
        &seeds,
        c.bandwidth_window_s,
        axes.iter().map(|a| a.key).collect(),
    )?;
    result.write_rows(&dir.join("sweep.csv"))?;
    result.write_summary(&dir.join("sweep_summary.csv"))?;
    Ok(SimulateOutcome {
        dir,
        row: None,
        sweep: Some(result),
    })
}

fn mode_name(trace: &SimTrace) -> &'static str {
    match trace.config.mode {
        blockhunter_core::chainsim::TopologyMode::Cluster => "cluster",
        blockhunter_core::chainsim::TopologyMode::NonCluster => "non_cluster",
    }
}

/// Per-detector result of a hunt.
#[derive(Debug, Clone, Serialize)]
pub struct DetectorOutcome {
    pub kind: DetectorKind,
    pub report: MetricsReport,
    /// Sample ids raised by the hunt threshold, highest score first.
    pub alerts: Vec<u64>,
    pub true_alerts: usize,
    pub false_alerts: usize,
    #[serde(skip)]
    pub rounds: RoundLog,
}

#[derive(Debug, Clone)]
pub struct HuntOutcome {
    pub dir: PathBuf,
    pub samples: usize,
    /// Ids of the labeled anomalies (the injected ones for simulated data).
    pub anomalies: Vec<u64>,
    pub results: Vec<DetectorOutcome>,
}

impl HuntOutcome {
    pub fn print(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "{} samples, {} labeled anomalous", self.samples, self.anomalies.len())?;
        writeln!(
            out,
            "{:<9}{:>10}{:>11}{:>9}{:>9}{:>9}{:>8}{:>10}{:>8}",
            "model", "accuracy", "precision", "recall", "f1", "auc", "alerts", "detected", "false"
        )?;
        for r in &self.results {
            writeln!(
                out,
                "{:<9}{:>10.4}{:>11.4}{:>9.4}{:>9.4}{:>9.4}{:>8}{:>10}{:>8}",
                r.kind.label(),
                r.report.accuracy,
                r.report.precision,
                r.report.recall,
                r.report.f1,
                r.report.auc,
                r.alerts.len(),
                r.true_alerts,
                r.false_alerts
            )?;
        }
        writeln!(out, "wrote {}", self.dir.display())
    }
}

pub const COMPARISON_COLUMNS: [&str; 14] = [
    "model",
    "tp",
    "tn",
    "fp",
    "fn",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "auc",
    "alerts",
    "true_alerts",
    "false_alerts",
    "anomalies",
];

struct Prepared {
    data: Dataset,
    shards: Vec<Dataset>,
}

fn prepare(inv: &Invocation, dir: &Path) -> CliResult<Prepared> {
    let c = &inv.loaded.config;
    let k = c.federation.clusters;
    let (data, strategy) = match &c.data {
        DataSource::Sim => {
            let topology = inv.topology()?;
            let trace = run_sim(&c.sim, &topology, c.seed)?;
            let mut w = csv::Writer::from_path(dir.join("injected.csv")).map_err(runtime)?;
            w.write_record(["id", "cluster", "flavor"]).map_err(runtime)?;
            for t in trace.transactions.iter().filter(|t| t.flavor != Flavor::Normal) {
                w.write_record([t.id.to_string(), t.cluster.to_string(), t.flavor.name().to_string()])
                    .map_err(runtime)?;
            }
            w.flush()?;
            (extract_features(&trace)?, ShardStrategy::ByClusterColumn)
        }
        DataSource::Csv { path, schema, shard } => {
            let schema = CsvSchema::load(&inv.loaded.resolve(schema))?;
            (load_csv(&inv.loaded.resolve(path), &schema)?, *shard)
        }
        DataSource::Synth {
            n,
            d,
            contamination,
            separation,
            shard,
        } => (synth_benchmark(*n, *d, *contamination, *separation, c.seed)?, *shard),
    };
    let shards = shard(
        &data,
        &ShardPlan {
            strategy,
            k,
            seed: c.seed,
        },
    )?;
    Ok(Prepared { data, shards })
}

/// Data, sharding, federated training and evaluation for each detector.
pub fn cmd_hunt(inv: &Invocation, detectors: &[DetectorKind]) -> CliResult<HuntOutcome> {
    inv.check(&[
        "topology",
        "sim",
        "federation",
        "hunt",
        "data",
        "sweep_seeds",
        "bandwidth_window_s",
    ])?;
    if detectors.is_empty() {
        return Err(CliError::Config("no detector selected".into()));
    }
    let c = &inv.loaded.config;
    let names: Vec<&str> = detectors.iter().map(|d| d.name()).collect();
    let dir = inv.run_dir("hunt", &names.join(","))?;
    let Prepared { data, shards } = prepare(inv, &dir)?;
    let scaler = federated_scaler(&shards)?;
    let shards: Vec<Dataset> = shards.iter().map(|s| scaler.transform(s)).collect::<Result<_, _>>()?;
    let test = scaler.transform(&data)?;
    let truth = data.anomaly_flags()?;
    let anomalies: Vec<u64> = data
        .samples
        .iter()
        .zip(&truth)
        .filter(|(_, &t)| t)
        .map(|(s, _)| s.id)
        .collect();

    let mut results = Vec::with_capacity(detectors.len());
    for &kind in detectors {
        let mut fcfg = c.federation.clone();
        fcfg.detector.kind = kind;
        fcfg.seed = c.seed;
        let mut fed = Federation::new(fcfg, shards.clone())?;
        let mut rounds = fed.run()?;
        if inv.deterministic {
            rounds.zero_durations();
        }
        let model = fed.global_model()?;
        let scores = model.score_dataset(&test)?;
        let predicted = score_to_label(&scores, c.hunt.contamination);
        let report = MetricsReport::build(&scores, &truth, &predicted, RecallConvention::Standard)?;
        let flags = c.hunt.apply(&scores);
        let mut flagged: Vec<usize> = (0..scores.len()).filter(|&i| flags[i]).collect();
        flagged.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let true_alerts = flagged.iter().filter(|&&i| truth[i]).count();

        let name = kind.name();
        rounds.write_csv(&dir.join(format!("rounds_{name}.csv")))?;
        report.write_json(&dir.join(format!("metrics_{name}.json")))?;
        report.write_roc_csv(&dir.join(format!("roc_{name}.csv")))?;
        let mut w = csv::Writer::from_path(dir.join(format!("alerts_{name}.csv"))).map_err(runtime)?;
        w.write_record(["id", "score", "anomalous"]).map_err(runtime)?;
        for &i in &flagged {
            w.write_record([
                data.samples[i].id.to_string(),
                scores[i].to_string(),
                u8::from(truth[i]).to_string(),
            ])
            .map_err(runtime)?;
        }
        w.flush()?;

        results.push(DetectorOutcome {
            kind,
            report,
            alerts: flagged.iter().map(|&i| data.samples[i].id).collect(),
            true_alerts,
            false_alerts: flagged.len() - true_alerts,
            rounds,
        });
    }

    let mut w = csv::Writer::from_path(dir.join("comparison.csv")).map_err(runtime)?;
    w.write_record(COMPARISON_COLUMNS).map_err(runtime)?;
    for r in &results {
        let m = &r.report;
        let cm = &m.confusion;
        w.write_record([
            r.kind.label().to_string(),
            cm.tp.to_string(),
            cm.tn.to_string(),
            cm.fp.to_string(),
            cm.fn_.to_string(),
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            m.auc.to_string(),
            r.alerts.len().to_string(),
            r.true_alerts.to_string(),
            r.false_alerts.to_string(),
            anomalies.len().to_string(),
        ])
        .map_err(runtime)?;
    }
    w.flush()?;

    Ok(HuntOutcome {
        dir,
        samples: data.len(),
        anomalies,
        results,
    })
}

/// Dry run: every diagnostic or `Ok`.
pub fn cmd_validate(loaded: &LoadedConfig) -> CliResult<()> {
    loaded.validate()
}

/// `all`, or a comma-separated list of detector names.
pub fn parse_detectors(s: &str) -> CliResult<Vec<DetectorKind>> {
    if s.trim() == "all" {
        return Ok(DetectorKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let k: DetectorKind = part.trim().parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}
