//! Bandwidth and throughput accounting over a finished trace.

use serde::{Deserialize, Serialize};

use super::{SimTrace, MB};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSeries {
    pub window_s: f64,
    /// MB/s of block traffic summed over all links, per window.
    pub mb_per_s: Vec<f64>,
    /// Total bytes over the run divided by its duration, in MB/s.
    pub mean: f64,
}

pub fn measure_bandwidth(trace: &SimTrace, window_s: f64) -> BandwidthSeries {
    let duration = trace.config.duration_s;
    let window_s = if window_s > 0.0 { window_s } else { duration };
    let last = trace.transmissions.last().map_or(0.0, |t| t.time).max(duration);
    let bins = ((last / window_s).ceil() as usize).max(1);
    let mut bytes = vec![0u64; bins];
    for t in &trace.transmissions {
        let i = ((t.time / window_s) as usize).min(bins - 1);
        bytes[i] += t.bytes;
    }
    let total: u64 = bytes.iter().sum();
    BandwidthSeries {
        window_s,
        mb_per_s: bytes.iter().map(|&b| b as f64 / MB / window_s).collect(),
        mean: total as f64 / MB / duration,
    }
}

/// Confirmed main-chain transactions per second.
pub fn measure_throughput(trace: &SimTrace) -> f64 {
    trace.confirmed_count() as f64 / trace.config.duration_s
}
