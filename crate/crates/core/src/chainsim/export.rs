//! CSV bundle of a trace: blocks, transactions, links and forks.

use std::path::Path;

use super::SimTrace;
use crate::error::Result;

pub const BLOCKS_HEADER: [&str; 12] = [
    "id",
    "parent",
    "miner",
    "height",
    "tx_count",
    "tx_start",
    "tx_end",
    "size_bytes",
    "created_at",
    "fake",
    "stale_parent",
    "main_chain",
];
pub const TRANSACTIONS_HEADER: [&str; 8] =
    ["id", "cluster", "timestamp", "value", "fee", "payload_bytes", "flavor", "confirmed_block"];
pub const LINKS_HEADER: [&str; 3] = ["a", "b", "bytes"];
pub const FORKS_HEADER: [&str; 4] = ["height", "block", "competitor", "time"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes blocks.csv, transactions.csv, links.csv and forks.csv into `dir`.
pub fn write_trace_bundle(trace: &SimTrace, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let on = trace.on_main_chain();

    let mut w = csv::Writer::from_path(dir.join("blocks.csv"))?;
    w.write_record(BLOCKS_HEADER)?;
    for b in &trace.blocks {
        w.write_record([
            b.id.to_string(),
            opt(b.parent),
            opt(b.miner),
            b.height.to_string(),
            b.tx_count().to_string(),
            b.tx_start.to_string(),
            b.tx_end.to_string(),
            b.size_bytes.to_string(),
            b.created_at.to_string(),
            u8::from(b.fake).to_string(),
            u8::from(b.stale_parent).to_string(),
            u8::from(on[b.id as usize]).to_string(),
        ])?;
    }
    w.flush()?;

    let confirming = trace.confirming_block();
    let mut w = csv::Writer::from_path(dir.join("transactions.csv"))?;
    w.write_record(TRANSACTIONS_HEADER)?;
    for t in &trace.transactions {
        w.write_record([
            t.id.to_string(),
            t.cluster.to_string(),
            t.timestamp.to_string(),
            t.value.to_string(),
            t.fee.to_string(),
            t.payload_bytes.to_string(),
            t.flavor.name().to_string(),
            opt(confirming[t.id as usize]),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("links.csv"))?;
    w.write_record(LINKS_HEADER)?;
    for l in &trace.links {
        w.write_record([l.a.to_string(), l.b.to_string(), l.bytes.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("forks.csv"))?;
    w.write_record(FORKS_HEADER)?;
    for f in &trace.forks {
        w.write_record([
            f.height.to_string(),
            f.block.to_string(),
            f.competitor.to_string(),
            f.time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
