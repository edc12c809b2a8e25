//! Per-transaction feature extraction from a finished trace.

use super::SimTrace;
use crate::data::{Dataset, Label, Sample};
use crate::error::{Error, Result};

pub const FEATURE_NAMES: [&str; 8] = [
    "value",
    "fee",
    "payload_bytes",
    "cluster_gap_s",
    "cluster_count_10s",
    "block_fullness",
    "fork_depth",
    "orphaned_parent",
];

const TRAILING_WINDOW_S: f64 = 10.0;

/// Longest orphaned branch forking off the main chain at each height.
fn fork_depth_by_height(trace: &SimTrace) -> Vec<u32> {
    let on = trace.on_main_chain();
    let max_height = trace.blocks.iter().map(|b| b.height).max().unwrap_or(0) as usize;
    let mut depth = vec![0u32; max_height + 2];
    for b in trace.blocks.iter().filter(|b| !on[b.id as usize]) {
        let mut root = b;
        while let Some(p) = root.parent {
            if on[p as usize] {
                break;
            }
            root = &trace.blocks[p as usize];
        }
        let d = b.height - root.height + 1;
        let slot = &mut depth[root.height as usize];
        *slot = (*slot).max(d);
    }
    depth
}

/// One labeled sample per transaction, ids equal to transaction ids and
/// `group` set to the sender cluster.
pub fn extract_features(trace: &SimTrace) -> Result<Dataset> {
    if trace.transactions.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let confirming = trace.confirming_block();
    let fork_depth = fork_depth_by_height(trace);
    let capacity = trace.config.block_capacity_bytes().max(1) as f64;
    let mut stale = vec![false; trace.transactions.len()];
    for b in trace.blocks.iter().filter(|b| b.stale_parent) {
        stale[b.tx_start..b.tx_end].iter_mut().for_each(|s| *s = true);
    }
    let anomalous = trace.ground_truth.anomalous_txs();

    let clusters = trace.transactions.iter().map(|t| t.cluster).max().unwrap_or(0) as usize + 1;
    let mut last_time = vec![0.0f64; clusters];
    // per-cluster recent timestamps for the trailing count
    let mut recent: Vec<std::collections::VecDeque<f64>> = vec![Default::default(); clusters];

    let samples = trace
        .transactions
        .iter()
        .map(|tx| {
            let c = tx.cluster as usize;
            let gap = tx.timestamp - last_time[c];
            last_time[c] = tx.timestamp;
            let window = &mut recent[c];
            window.push_back(tx.timestamp);
            while window.front().is_some_and(|&t| t <= tx.timestamp - TRAILING_WINDOW_S) {
                window.pop_front();
            }
            let (fullness, depth) = match confirming[tx.id as usize] {
                Some(b) => {
                    let blk = &trace.blocks[b as usize];
                    (blk.payload_bytes as f64 / capacity, fork_depth[blk.height as usize])
                }
                None => (0.0, 0),
            };
            let features = vec![
                tx.value,
                tx.fee,
                tx.payload_bytes as f64,
                gap,
                window.len() as f64,
                fullness,
                depth as f64,
                f64::from(u8::from(stale[tx.id as usize])),
            ];
            let label = Label::from_flag(anomalous.binary_search(&tx.id).is_ok());
            Sample {
                id: tx.id,
                features,
                label: Some(label),
                group: Some(tx.cluster),
            }
        })
        .collect();
    Ok(Dataset::new("chainsim", samples).with_feature_names(FEATURE_NAMES.iter().map(|s| s.to_string()).collect()))
}
