//! `--sweep key=values` grids over simulation parameters.

use std::io::Write;
use std::path::Path;

use blockhunter_core::chainsim::{measure_bandwidth, measure_throughput, run_sim, SimConfig, SimTrace, TopologyMode};
use blockhunter_core::topology::{build_topology, ClusterTopology, TopologyConfig};
use blockhunter_core::{SeededRng, Stream};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKey {
    BlockSize,
    Miners,
    TxRate,
    BlockInterval,
    Duration,
    Mode,
}

impl SweepKey {
    fn parse(s: &str) -> CliResult<Self> {
        Ok(match s {
            "block_size" | "block_size_mb" => SweepKey::BlockSize,
            "miners" | "miner_count" => SweepKey::Miners,
            "tx_rate" => SweepKey::TxRate,
            "interval" | "block_interval_s" => SweepKey::BlockInterval,
            "duration" | "duration_s" => SweepKey::Duration,
            "mode" => SweepKey::Mode,
            other => return Err(CliError::Config(format!("unknown sweep key `{other}`"))),
        })
    }

    /// Column name in the sweep CSVs.
    pub fn column(self) -> &'static str {
        match self {
            SweepKey::BlockSize => "block_size_mb",
            SweepKey::Miners => "miners",
            SweepKey::TxRate => "tx_rate",
            SweepKey::BlockInterval => "block_interval_s",
            SweepKey::Duration => "duration_s",
            SweepKey::Mode => "mode",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepValue {
    Num(f64),
    Mode(TopologyMode),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Num(v) => write!(f, "{v}"),
            SweepValue::Mode(TopologyMode::Cluster) => f.write_str("cluster"),
            SweepValue::Mode(TopologyMode::NonCluster) => f.write_str("non_cluster"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: SweepKey,
    pub values: Vec<SweepValue>,
}

fn number(s: &str) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Config(format!("`{s}` is not a number")))
}

impl SweepAxis {
    /// `key=v1,v2,...` or `key=a..b`, the range doubling from `a` up to `b`.
    pub fn parse(arg: &str) -> CliResult<Self> {
        let (key, values) = arg
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("sweep `{arg}` is not key=values")))?;
        let key = SweepKey::parse(key.trim())?;
        let values = if key == SweepKey::Mode {
            values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<TopologyMode>()
                        .map(SweepValue::Mode)
                        .map_err(CliError::from)
                })
                .collect::<CliResult<Vec<_>>>()?
        } else if let Some((a, b)) = values.split_once("..") {
            let (a, b) = (number(a)?, number(b)?);
            if !(a > 0.0 && b >= a) {
                return Err(CliError::Config(format!("sweep range `{values}` needs 0 < a <= b")));
            }
            let mut out = Vec::new();
            let mut v = a;
            while v <= b * (1.0 + 1e-12) {
                out.push(SweepValue::Num(v));
                v *= 2.0;
            }
            out
        } else {
            values
                .split(',')
                .map(|v| number(v).map(SweepValue::Num))
                .collect::<CliResult<Vec<_>>>()?
        };
        if values.is_empty() {
            return Err(CliError::Config(format!("sweep `{arg}` has no values")));
        }
        Ok(Self { key, values })
    }

    fn apply(&self, value: SweepValue, cfg: &mut SimConfig) -> CliResult<()> {
        match (self.key, value) {
            (SweepKey::BlockSize, SweepValue::Num(v)) => cfg.block_size_mb = v,
            (SweepKey::Miners, SweepValue::Num(v)) => {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(CliError::Config(format!("miner count {v} is not a positive integer")));
                }
                cfg.miner_count = v as usize;
            }
            (SweepKey::TxRate, SweepValue::Num(v)) => cfg.tx_rate = v,
            (SweepKey::BlockInterval, SweepValue::Num(v)) => cfg.block_interval_s = v,
            (SweepKey::Duration, SweepValue::Num(v)) => cfg.duration_s = v,
            (SweepKey::Mode, SweepValue::Mode(m)) => cfg.mode = m,
            _ => unreachable!("values are parsed per key"),
        }
        Ok(())
    }
}

/// One grid point: the swept values and the resulting simulation config.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    pub values: Vec<SweepValue>,
    pub config: SimConfig,
}

/// Cartesian product of the axes, the first axis varying slowest.
pub fn expand_grid(base: &SimConfig, axes: &[SweepAxis]) -> CliResult<Vec<SweepCell>> {
    let mut combos: Vec<Vec<SweepValue>> = vec![Vec::new()];
    for axis in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                axis.values.iter().map(move |v| {
                    let mut next = c.clone();
                    next.push(*v);
                    next
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .enumerate()
        .map(|(index, values)| {
            let mut config = base.clone();
            for (axis, v) in axes.iter().zip(&values) {
                axis.apply(*v, &mut config)?;
            }
            config.validate()?;
            Ok(SweepCell { index, values, config })
        })
        .collect()
}

/// Measures of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub seed: u64,
    pub blocks: usize,
    pub main_chain_height: u32,
    pub forks: usize,
    pub orphaned_blocks: usize,
    pub transactions: usize,
    pub confirmed_txs: usize,
    pub throughput_tx_s: f64,
    pub mean_bandwidth_mb_s: f64,
}

pub const ROW_COLUMNS: [&str; 9] = [
    "seed",
    "blocks",
    "main_chain_height",
    "forks",
    "orphaned_blocks",
    "transactions",
    "confirmed_txs",
    "throughput_tx_s",
    "mean_bandwidth_mb_s",
];

impl SimRow {
    pub fn measure(trace: &SimTrace, seed: u64, window_s: f64) -> Self {
        Self {
            seed,
            blocks: trace.blocks.len(),
            main_chain_height: trace.tip().height,
            forks: trace.forks.len(),
            orphaned_blocks: trace.orphaned_count(),
            transactions: trace.transactions.len(),
            confirmed_txs: trace.confirmed_count(),
            throughput_tx_s: measure_throughput(trace),
            mean_bandwidth_mb_s: measure_bandwidth(trace, window_s).mean,
        }
    }

    pub fn fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.blocks.to_string(),
            self.main_chain_height.to_string(),
            self.forks.to_string(),
            self.orphaned_blocks.to_string(),
            self.transactions.to_string(),
            self.confirmed_txs.to_string(),
            self.throughput_tx_s.to_string(),
            self.mean_bandwidth_mb_s.to_string(),
        ]
    }
}

/// Seed-averaged measures of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: usize,
    pub values: Vec<SweepValue>,
    pub seeds: usize,
    pub throughput_tx_s: f64,
    pub throughput_sd: f64,
    pub mean_bandwidth_mb_s: f64,
}

pub const SUMMARY_COLUMNS: [&str; 5] = ["seeds", "throughput_tx_s", "throughput_sd", "mean_bandwidth_mb_s", "forks"];

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axes: Vec<SweepKey>,
    pub rows: Vec<(usize, Vec<SweepValue>, SimRow)>,
    pub summary: Vec<CellSummary>,
}

/// Builds one topology per seed, then runs every (cell, seed) pair in parallel.
pub fn run_grid(
    topology: &TopologyConfig,
    cells: &[SweepCell],
    seeds: &[u64],
    window_s: f64,
    axes: Vec<SweepKey>,
) -> CliResult<SweepResult> {
    let topologies: Vec<ClusterTopology> = seeds
        .par_iter()
        .map(|&s| build_topology(topology, &mut SeededRng::new(s, Stream::Topology)))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..seeds.len()).map(move |s| (c, s))).collect();
    let rows: Vec<(usize, Vec<SweepValue>, SimRow)> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let cell = &cells[c];
            let trace = run_sim(&cell.config, &topologies[s], seeds[s])?;
            Ok((cell.index, cell.values.clone(), SimRow::measure(&trace, seeds[s], window_s)))
        })
        .collect::<CliResult<_>>()?;
    let summary = cells
        .iter()
        .map(|cell| {
            let mine: Vec<&SimRow> = rows.iter().filter(|r| r.0 == cell.index).map(|r| &r.2).collect();
            let n = mine.len() as f64;
            let tp: Vec<f64> = mine.iter().map(|r| r.throughput_tx_s).collect();
            let mean_tp = tp.iter().sum::<f64>() / n;
            let var = if mine.len() > 1 {
                tp.iter().map(|v| (v - mean_tp).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            CellSummary {
                cell: cell.index,
                values: cell.values.clone(),
                seeds: mine.len(),
                throughput_tx_s: mean_tp,
                throughput_sd: var.sqrt(),
                mean_bandwidth_mb_s: mine.iter().map(|r| r.mean_bandwidth_mb_s).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(SweepResult { axes, rows, summary })
}

impl SweepResult {
    fn header(&self, tail: &[&str]) -> Vec<String> {
        let mut h = vec!["cell".to_string()];
        h.extend(self.axes.iter().map(|k| k.column().to_string()));
        h.extend(tail.iter().map(|s| s.to_string()));
        h
    }

    /// One row per (cell, seed).
    pub fn write_rows(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(self.header(&ROW_COLUMNS)).map_err(csv_err)?;
        for (cell, values, row) in &self.rows {
            let mut rec = vec![cell.to_string()];
            rec.extend(values.iter().map(ToString::to_string));
            rec.extend(row.fields());
            w.write_record(rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One seed-averaged row per cell.
    pub fn write_summary(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(self.header(&SUMMARY_COLUMNS)).map_err(csv_err)?;
        for s in &self.summary {
            let forks: f64 = self
                .rows
                .iter()
                .filter(|r| r.0 == s.cell)
                .map(|r| r.2.forks as f64)
                .sum::<f64>()
                / s.seeds as f64;
            let mut rec = vec![s.cell.to_string()];
            rec.extend(s.values.iter().map(ToString::to_string));
            rec.extend([
                s.seeds.to_string(),
                s.throughput_tx_s.to_string(),
                s.throughput_sd.to_string(),
                s.mean_bandwidth_mb_s.to_string(),
                forks.to_string(),
            ]);
            w.write_record(rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn print_summary(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let mut head = self.axes.iter().map(|k| format!("{:>14}", k.column())).collect::<Vec<_>>();
        head.push(format!("{:>16}{:>18}", "throughput_tx_s", "bandwidth_mb_s"));
        writeln!(out, "{}", head.join(""))?;
        for s in &self.summary {
            let mut line = s.values.iter().map(|v| format!("{:>14}", v.to_string())).collect::<Vec<_>>();
            line.push(format!("{:>16.3}{:>18.4}", s.throughput_tx_s, s.mean_bandwidth_mb_s));
            writeln!(out, "{}", line.join(""))?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(e.to_string())
}
