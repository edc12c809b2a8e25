//! Discrete-event simulator of the blockchain overlay on a cluster topology.
//!
//! Transactions enter one global arrival-ordered stream; a block takes a
//! contiguous run of that stream starting where its parent stopped, so the
//! transactions confirmed by a chain are always a prefix of the stream.

mod engine;
pub mod export;
pub mod features;
pub mod inject;
pub mod measure;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{non_cluster_graph, run_sim};
pub use features::{extract_features, FEATURE_NAMES};
pub use inject::InjectionScenario;
pub use measure::{measure_bandwidth, measure_throughput, BandwidthSeries};

pub const MB: f64 = 1_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    #[default]
    Cluster,
    NonCluster,
}

impl std::str::FromStr for TopologyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(TopologyMode::Cluster),
            "non_cluster" | "non-cluster" => Ok(TopologyMode::NonCluster),
            other => Err(Error::ConfigInvalid(format!("unknown topology mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub block_size_mb: f64,
    pub block_interval_s: f64,
    pub miner_count: usize,
    /// Miner count at which blocks arrive every `block_interval_s`; each
    /// miner contributes an equal share of hash power.
    pub reference_miners: usize,
    /// Transactions per second generated in each cluster.
    pub tx_rate: f64,
    pub duration_s: f64,
    pub link_bandwidth_mbps: f64,
    pub link_latency_ms: f64,
    /// Relative ± jitter on latency per delivery.
    pub latency_jitter: f64,
    pub mode: TopologyMode,
    pub non_cluster_degree: usize,
    pub header_bytes: u64,
    pub payload_bytes: f64,
    pub payload_sigma: f64,
    pub value_median: f64,
    pub value_sigma: f64,
    /// Fee per payload byte at the median.
    pub fee_per_byte: f64,
    pub fee_sigma: f64,
    pub injection: InjectionScenario,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            block_size_mb: 1.0,
            block_interval_s: 10.0,
            miner_count: 16,
            reference_miners: 16,
            tx_rate: 10.0,
            duration_s: 600.0,
            link_bandwidth_mbps: 100.0,
            link_latency_ms: 50.0,
            latency_jitter: 0.2,
            mode: TopologyMode::Cluster,
            non_cluster_degree: 8,
            header_bytes: 80,
            payload_bytes: 2500.0,
            payload_sigma: 0.2,
            value_median: 100.0,
            value_sigma: 0.5,
            fee_per_byte: 0.0001,
            fee_sigma: 0.3,
            injection: InjectionScenario::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("block_size_mb", self.block_size_mb),
            ("block_interval_s", self.block_interval_s),
            ("duration_s", self.duration_s),
            ("link_bandwidth_mbps", self.link_bandwidth_mbps),
            ("payload_bytes", self.payload_bytes),
            ("value_median", self.value_median),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("tx_rate", self.tx_rate),
            ("link_latency_ms", self.link_latency_ms),
            ("payload_sigma", self.payload_sigma),
            ("value_sigma", self.value_sigma),
            ("fee_per_byte", self.fee_per_byte),
            ("fee_sigma", self.fee_sigma),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.latency_jitter) {
            return Err(Error::ConfigInvalid("latency_jitter must lie in [0, 1)".into()));
        }
        if self.miner_count == 0 || self.reference_miners == 0 {
            return Err(Error::ConfigInvalid("miner_count and reference_miners must be >= 1".into()));
        }
        if self.mode == TopologyMode::NonCluster && self.non_cluster_degree == 0 {
            return Err(Error::ConfigInvalid("non_cluster_degree must be >= 1".into()));
        }
        self.injection.validate()
    }

    pub fn block_capacity_bytes(&self) -> u64 {
        ((self.block_size_mb * MB) as u64).saturating_sub(self.header_bytes)
    }

    /// Network-wide block rate λ = miners / (interval · reference_miners).
    pub fn block_rate(&self) -> f64 {
        self.miner_count as f64 / (self.block_interval_s * self.reference_miners as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Normal,
    Malicious,
    FakeSideChannel,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Normal => "normal",
            Flavor::Malicious => "malicious",
            Flavor::FakeSideChannel => "fake_side_channel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: u64,
    pub cluster: u32,
    pub timestamp: f64,
    pub value: f64,
    pub fee: f64,
    pub payload_bytes: u64,
    pub flavor: Flavor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub id: u32,
    /// `None` only for genesis.
    pub parent: Option<u32>,
    pub miner: Option<u32>,
    pub height: u32,
    /// Transactions are `stream[tx_start..tx_end]`.
    pub tx_start: usize,
    pub tx_end: usize,
    pub size_bytes: u64,
    pub payload_bytes: u64,
    pub created_at: f64,
    pub fake: bool,
    /// Built on an ancestor of the miner's tip rather than the tip itself.
    pub stale_parent: bool,
}

impl BlockRecord {
    pub fn tx_count(&self) -> usize {
        self.tx_end - self.tx_start
    }
}

/// A block created at a height that already had a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkEvent {
    pub height: u32,
    pub block: u32,
    pub competitor: u32,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub malicious_txs: Vec<u64>,
    pub side_channel_txs: Vec<u64>,
    pub fake_blocks: Vec<u32>,
}

impl GroundTruth {
    pub fn anomalous_txs(&self) -> Vec<u64> {
        let mut all: Vec<u64> = self.malicious_txs.iter().chain(&self.side_channel_txs).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn len(&self) -> usize {
        self.malicious_txs.len() + self.side_channel_txs.len() + self.fake_blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkUsage {
    pub a: u32,
    pub b: u32,
    pub bytes: u64,
}

/// One block transmission over one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub time: f64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub config: SimConfig,
    pub nodes: usize,
    pub transactions: Vec<Transaction>,
    /// Block 0 is genesis.
    pub blocks: Vec<BlockRecord>,
    pub forks: Vec<ForkEvent>,
    pub links: Vec<LinkUsage>,
    pub transmissions: Vec<Transmission>,
    /// Genesis first.
    pub main_chain: Vec<u32>,
    pub ground_truth: GroundTruth,
}

impl SimTrace {
    pub fn tip(&self) -> &BlockRecord {
        &self.blocks[*self.main_chain.last().unwrap_or(&0) as usize]
    }

    /// Transactions confirmed by the main chain (a stream prefix).
    pub fn confirmed_count(&self) -> usize {
        self.tip().tx_end
    }

    pub fn on_main_chain(&self) -> Vec<bool> {
        let mut on = vec![false; self.blocks.len()];
        for &b in &self.main_chain {
            on[b as usize] = true;
        }
        on
    }

    /// Transactions included only in blocks off the main chain.
    pub fn orphaned_count(&self) -> usize {
        let confirmed = self.confirmed_count();
        let on = self.on_main_chain();
        let mut orphaned = vec![false; self.transactions.len()];
        for b in self.blocks.iter().filter(|b| !on[b.id as usize]) {
            for flag in orphaned.iter_mut().take(b.tx_end).skip(b.tx_start.max(confirmed)) {
                *flag = true;
            }
        }
        orphaned.iter().filter(|&&o| o).count()
    }

    /// Neither confirmed nor seen in any block.
    pub fn mempool_count(&self) -> usize {
        self.transactions.len() - self.confirmed_count() - self.orphaned_count()
    }

    /// Main-chain block confirming each transaction.
    pub fn confirming_block(&self) -> Vec<Option<u32>> {
        let mut of = vec![None; self.transactions.len()];
        for &b in &self.main_chain {
            let blk = &self.blocks[b as usize];
            for slot in of.iter_mut().take(blk.tx_end).skip(blk.tx_start) {
                *slot = Some(b);
            }
        }
        of
    }
}
