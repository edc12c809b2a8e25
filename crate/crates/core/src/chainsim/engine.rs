//! Event loop: transaction stream, mining, block flooding, fork bookkeeping.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp};

use super::inject::{inject_transactions, sort_and_renumber, TxModel};
use super::{
    BlockRecord, Flavor, ForkEvent, GroundTruth, LinkUsage, SimConfig, SimTrace, TopologyMode, Transaction,
    Transmission,
};
use crate::data::{SeededRng, Stream};
use crate::error::{Error, Result};
use crate::topology::ClusterTopology;

#[derive(Debug, Clone, Copy)]
enum Event {
    Mine { miner: u32, fake: bool },
    Arrive { node: u32, block: u32, from: u32 },
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // BinaryHeap is a max-heap: invert so the earliest event pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

/// Connected random graph with average degree `degree`: a random spanning
/// tree plus uniformly drawn extra edges.
pub fn non_cluster_graph(nodes: usize, degree: usize, rng: &mut dyn RngCore) -> Vec<(u32, u32)> {
    if nodes < 2 {
        return Vec::new();
    }
    let mut order: Vec<u32> = (0..nodes as u32).collect();
    order.shuffle(rng);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut present = std::collections::HashSet::new();
    for i in 1..nodes {
        let j = rng.random_range(0..i);
        let (a, b) = (order[i].min(order[j]), order[i].max(order[j]));
        present.insert((a, b));
        edges.push((a, b));
    }
    let target = (nodes * degree / 2).min(nodes * (nodes - 1) / 2);
    while edges.len() < target {
        let a = rng.random_range(0..nodes as u32);
        let b = rng.random_range(0..nodes as u32);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if present.insert(key) {
            edges.push(key);
        }
    }
    edges.sort_unstable();
    edges
}

/// Poisson arrivals per cluster merged into one stream, ids = positions.
fn generate_transactions(cfg: &SimConfig, clusters: usize, model: &TxModel, rng: &mut dyn RngCore) -> Vec<Transaction> {
    let mut txs = Vec::new();
    if cfg.tx_rate <= 0.0 {
        return txs;
    }
    let gap = Exp::new(cfg.tx_rate).expect("positive rate");
    for c in 0..clusters {
        let mut t = gap.sample(rng);
        while t <= cfg.duration_s {
            txs.push(model.draw(0, c as u32, t, rng));
            t += gap.sample(rng);
        }
    }
    sort_and_renumber(&mut txs);
    txs
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    adjacency: Vec<Vec<(u32, usize)>>,
    link_bytes: Vec<u64>,
    timestamps: Vec<f64>,
    /// prefix[i] = payload bytes of stream[..i]
    prefix: Vec<u64>,
    blocks: Vec<BlockRecord>,
    received: Vec<Vec<bool>>,
    tips: Vec<u32>,
    first_at_height: Vec<u32>,
    forks: Vec<ForkEvent>,
    transmissions: Vec<Transmission>,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    jitter: SeededRng,
}

impl Engine<'_> {
    fn push(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn hop_delay(&mut self, bytes: u64) -> f64 {
        let transfer = bytes as f64 * 8.0 / (self.cfg.link_bandwidth_mbps * 1e6);
        let jitter = if self.cfg.latency_jitter > 0.0 {
            1.0 + self.cfg.latency_jitter * self.jitter.random_range(-1.0..1.0)
        } else {
            1.0
        };
        transfer + self.cfg.link_latency_ms / 1000.0 * jitter
    }

    /// End of the longest stream run after `start` that fits `capacity` and had arrived by `t`.
    fn fill(&self, start: usize, capacity: u64, t: f64) -> usize {
        let arrived = self.timestamps.partition_point(|&ts| ts <= t).max(start);
        let base = self.prefix[start];
        start + self.prefix[start..=arrived].partition_point(|&p| p - base <= capacity) - 1
    }

    fn mine(&mut self, t: f64, miner: u32, fake: bool) {
        let mut parent = self.tips[miner as usize];
        let mut capacity = self.cfg.block_capacity_bytes();
        if fake {
            for _ in 0..self.cfg.injection.fake_parent_depth {
                if let Some(p) = self.blocks[parent as usize].parent {
                    parent = p;
                }
            }
            capacity = (capacity as f64 * self.cfg.injection.fake_oversize) as u64;
        }
        let start = self.blocks[parent as usize].tx_end;
        let end = self.fill(start, capacity, t);
        let payload = self.prefix[end] - self.prefix[start];
        let id = self.blocks.len() as u32;
        let height = self.blocks[parent as usize].height + 1;
        self.blocks.push(BlockRecord {
            id,
            parent: Some(parent),
            miner: Some(miner),
            height,
            tx_start: start,
            tx_end: end,
            size_bytes: payload + self.cfg.header_bytes,
            payload_bytes: payload,
            created_at: t,
            fake,
            stale_parent: fake || parent != self.tips[miner as usize],
        });
        self.received.push(vec![false; self.tips.len()]);
        match self.first_at_height.get(height as usize) {
            Some(&competitor) => self.forks.push(ForkEvent {
                height,
                block: id,
                competitor,
                time: t,
            }),
            None => self.first_at_height.push(id),
        }
        self.receive(t, miner, id, u32::MAX);
    }

    fn receive(&mut self, t: f64, node: u32, block: u32, from: u32) {
        let n = node as usize;
        if self.received[block as usize][n] {
            return;
        }
        self.received[block as usize][n] = true;
        // Honest nodes relay fake blocks but never build on them.
        let blk = &self.blocks[block as usize];
        if !blk.fake && blk.height > self.blocks[self.tips[n] as usize].height {
            self.tips[n] = block;
        }
        let size = self.blocks[block as usize].size_bytes;
        for k in 0..self.adjacency[n].len() {
            let (next, link) = self.adjacency[n][k];
            if next == from {
                continue;
            }
            let arrive = t + self.hop_delay(size);
            self.link_bytes[link] += size;
            self.transmissions.push(Transmission { time: t, bytes: size });
            self.push(arrive, Event::Arrive { node: next, block, from: node });
        }
    }
}

/// Runs one simulation over the factories of `topology`.
pub fn run_sim(cfg: &SimConfig, topology: &ClusterTopology, seed: u64) -> Result<SimTrace> {
    cfg.validate()?;
    let nodes = topology.factories;
    if cfg.miner_count > nodes {
        return Err(Error::ConfigInvalid(format!(
            "miner_count {} exceeds the {nodes} factories",
            cfg.miner_count
        )));
    }
    let edges: Vec<(u32, u32)> = match cfg.mode {
        TopologyMode::Cluster => {
            let mut e: Vec<(u32, u32)> = topology.intra_links.iter().chain(&topology.inter_links).copied().collect();
            e.sort_unstable();
            e.dedup();
            e
        }
        TopologyMode::NonCluster => non_cluster_graph(nodes, cfg.non_cluster_degree, &mut SeededRng::new(seed, Stream::Custom(1))),
    };
    let mut adjacency = vec![Vec::new(); nodes];
    for (i, &(a, b)) in edges.iter().enumerate() {
        adjacency[a as usize].push((b, i));
        adjacency[b as usize].push((a, i));
    }

    let model = TxModel::new(cfg)?;
    let txs = generate_transactions(cfg, topology.cluster_count(), &model, &mut SeededRng::new(seed, Stream::TxGeneration));
    let mut inject_rng = SeededRng::new(seed, Stream::Injection);
    let transactions = inject_transactions(txs, &cfg.injection, cfg, &model, &mut inject_rng)?;

    let mut mining = SeededRng::new(seed, Stream::Mining);
    let mut miners: Vec<u32> = topology.heads.clone();
    let mut rest: Vec<u32> = (0..nodes as u32).filter(|f| !topology.heads.contains(f)).collect();
    rest.shuffle(&mut mining);
    miners.extend(rest);
    miners.truncate(cfg.miner_count);

    let mut prefix = Vec::with_capacity(transactions.len() + 1);
    prefix.push(0u64);
    for t in &transactions {
        prefix.push(prefix.last().unwrap() + t.payload_bytes);
    }
    let genesis = BlockRecord {
        id: 0,
        parent: None,
        miner: None,
        height: 0,
        tx_start: 0,
        tx_end: 0,
        size_bytes: cfg.header_bytes,
        payload_bytes: 0,
        created_at: 0.0,
        fake: false,
        stale_parent: false,
    };
    let mut engine = Engine {
        cfg,
        adjacency,
        link_bytes: vec![0; edges.len()],
        timestamps: transactions.iter().map(|t| t.timestamp).collect(),
        prefix,
        blocks: vec![genesis],
        received: vec![vec![true; nodes]],
        tips: vec![0; nodes],
        first_at_height: vec![0],
        forks: Vec::new(),
        transmissions: Vec::new(),
        queue: BinaryHeap::new(),
        seq: 0,
        jitter: SeededRng::new(seed, Stream::Jitter),
    };

    let inter_block = Exp::new(cfg.block_rate()).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let mut t = inter_block.sample(&mut mining);
    while t <= cfg.duration_s {
        let miner = miners[mining.random_range(0..miners.len())];
        engine.push(t, Event::Mine { miner, fake: false });
        t += inter_block.sample(&mut mining);
    }
    for _ in 0..cfg.injection.fake_blocks {
        let at = inject_rng.random_range(0.0..cfg.duration_s);
        let miner = miners[inject_rng.random_range(0..miners.len())];
        engine.push(at, Event::Mine { miner, fake: true });
    }

    let mut clock = 0.0f64;
    while let Some(Scheduled { time, event, .. }) = engine.queue.pop() {
        debug_assert!(time >= clock);
        clock = time;
        match event {
            Event::Mine { miner, fake } => engine.mine(time, miner, fake),
            Event::Arrive { node, block, from } => engine.receive(time, node, block, from),
        }
    }

    // Longest chain; equal heights go to the earliest block.
    let tip = engine
        .blocks
        .iter()
        .filter(|b| !b.fake)
        .max_by(|a, b| a.height.cmp(&b.height).then(b.id.cmp(&a.id)))
        .map_or(0, |b| b.id);
    let mut main_chain = vec![tip];
    while let Some(p) = engine.blocks[*main_chain.last().unwrap() as usize].parent {
        main_chain.push(p);
    }
    main_chain.reverse();

    let ground_truth = GroundTruth {
        malicious_txs: transactions.iter().filter(|t| t.flavor == Flavor::Malicious).map(|t| t.id).collect(),
        side_channel_txs: transactions
            .iter()
            .filter(|t| t.flavor == Flavor::FakeSideChannel)
            .map(|t| t.id)
            .collect(),
        fake_blocks: engine.blocks.iter().filter(|b| b.fake).map(|b| b.id).collect(),
    };
    let links = edges
        .iter()
        .zip(&engine.link_bytes)
        .map(|(&(a, b), &bytes)| LinkUsage { a, b, bytes })
        .collect();
    Ok(SimTrace {
        config: cfg.clone(),
        nodes,
        transactions,
        blocks: engine.blocks,
        forks: engine.forks,
        links,
        transmissions: engine.transmissions,
        main_chain,
        ground_truth,
    })
}
