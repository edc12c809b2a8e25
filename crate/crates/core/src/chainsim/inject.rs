//! Anomaly injection: malicious and side-channel transactions, fake blocks.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{Flavor, SimConfig, Transaction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionScenario {
    pub malicious: usize,
    pub side_channel: usize,
    pub fake_blocks: usize,
    pub value_factor: f64,
    pub fee_factor: f64,
    /// Malicious transactions trail a normal one by U(min, max) seconds.
    pub burst_gap_min_s: f64,
    pub burst_gap_max_s: f64,
    pub dust_factor: f64,
    pub side_channel_payload_factor: f64,
    /// Fake blocks carry up to this multiple of the block capacity.
    pub fake_oversize: f64,
    /// How far behind the tip a fake block's parent sits.
    pub fake_parent_depth: u32,
}

impl Default for InjectionScenario {
    fn default() -> Self {
        Self {
            malicious: 0,
            side_channel: 0,
            fake_blocks: 0,
            value_factor: 20.0,
            fee_factor: 0.1,
            burst_gap_min_s: 0.001,
            burst_gap_max_s: 0.005,
            dust_factor: 0.01,
            side_channel_payload_factor: 8.0,
            fake_oversize: 2.0,
            fake_parent_depth: 2,
        }
    }
}

impl InjectionScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.value_factor > 0.0 && self.fee_factor > 0.0 && self.dust_factor > 0.0) {
            return Err(Error::ConfigInvalid("injection factors must be positive".into()));
        }
        if !(self.burst_gap_min_s > 0.0 && self.burst_gap_min_s <= self.burst_gap_max_s) {
            return Err(Error::ConfigInvalid("burst gaps need 0 < min <= max".into()));
        }
        if !(self.side_channel_payload_factor >= 1.0 && self.fake_oversize >= 1.0) {
            return Err(Error::ConfigInvalid("payload and oversize factors must be >= 1".into()));
        }
        if self.fake_parent_depth < 2 {
            return Err(Error::ConfigInvalid("fake blocks need a parent at least 2 behind the tip".into()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.malicious == 0 && self.side_channel == 0 && self.fake_blocks == 0
    }
}

/// Distributions of a normal transaction's attributes.
pub(crate) struct TxModel {
    value: LogNormal<f64>,
    payload: LogNormal<f64>,
    fee_noise: LogNormal<f64>,
    fee_per_byte: f64,
    median_value: f64,
}

impl TxModel {
    pub(crate) fn new(cfg: &SimConfig) -> Result<Self> {
        let ln = |median: f64, sigma: f64| {
            LogNormal::new(median.ln(), sigma).map_err(|e| Error::ConfigInvalid(e.to_string()))
        };
        Ok(Self {
            value: ln(cfg.value_median, cfg.value_sigma)?,
            payload: ln(cfg.payload_bytes, cfg.payload_sigma)?,
            fee_noise: ln(1.0, cfg.fee_sigma)?,
            fee_per_byte: cfg.fee_per_byte,
            median_value: cfg.value_median,
        })
    }

    pub(crate) fn draw(&self, id: u64, cluster: u32, timestamp: f64, rng: &mut dyn RngCore) -> Transaction {
        let value = self.value.sample(rng);
        let payload_bytes = self.payload.sample(rng).round().max(1.0) as u64;
        let fee = payload_bytes as f64 * self.fee_per_byte * self.fee_noise.sample(rng);
        Transaction {
            id,
            cluster,
            timestamp,
            value,
            fee,
            payload_bytes,
            flavor: Flavor::Normal,
        }
    }
}

/// Inserts malicious and side-channel transactions right behind randomly
/// chosen normal ones. Returns the new stream sorted by arrival with ids
/// reassigned, so ids stay equal to stream positions.
pub(crate) fn inject_transactions(
    mut txs: Vec<Transaction>,
    scenario: &InjectionScenario,
    cfg: &SimConfig,
    model: &TxModel,
    rng: &mut dyn RngCore,
) -> Result<Vec<Transaction>> {
    let wanted = scenario.malicious + scenario.side_channel;
    if wanted == 0 {
        return Ok(txs);
    }
    let latest = cfg.duration_s - scenario.burst_gap_max_s;
    let hosts: Vec<usize> = (0..txs.len()).filter(|&i| txs[i].timestamp <= latest).collect();
    if hosts.len() < wanted {
        return Err(Error::ConfigInvalid(format!(
            "{wanted} injections requested but only {} normal transactions can host one",
            hosts.len()
        )));
    }
    let picked = rand::seq::index::sample(rng, hosts.len(), wanted);
    let mut extra = Vec::with_capacity(wanted);
    for (k, slot) in picked.iter().enumerate() {
        let host = &txs[hosts[slot]];
        let gap = rng.random_range(scenario.burst_gap_min_s..=scenario.burst_gap_max_s);
        let mut tx = model.draw(0, host.cluster, host.timestamp + gap, rng);
        if k < scenario.malicious {
            tx.value = tx.value.max(model.median_value) * scenario.value_factor;
            tx.fee *= scenario.fee_factor;
            tx.flavor = Flavor::Malicious;
        } else {
            tx.value *= scenario.dust_factor;
            tx.payload_bytes = (tx.payload_bytes as f64 * scenario.side_channel_payload_factor).round() as u64;
            tx.flavor = Flavor::FakeSideChannel;
        }
        extra.push(tx);
    }
    txs.extend(extra);
    sort_and_renumber(&mut txs);
    Ok(txs)
}

/// Orders by (timestamp, cluster) and sets ids to positions.
pub(crate) fn sort_and_renumber(txs: &mut [Transaction]) {
    txs.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.cluster.cmp(&b.cluster)));
    for (i, t) in txs.iter_mut().enumerate() {
        t.id = i as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeededRng, Stream};

    fn stream(n: usize, cfg: &SimConfig, model: &TxModel) -> Vec<Transaction> {
        let mut r = SeededRng::new(1, Stream::TxGeneration);
        (0..n)
            .map(|i| model.draw(i as u64, (i % 3) as u32, i as f64 * cfg.duration_s / n as f64, &mut r))
            .collect()
    }

    #[test]
    fn zero_count_leaves_stream_alone() {
        let cfg = SimConfig::default();
        let model = TxModel::new(&cfg).unwrap();
        let txs = stream(100, &cfg, &model);
        let out = inject_transactions(txs.clone(), &InjectionScenario::default(), &cfg, &model, &mut SeededRng::new(2, Stream::Injection)).unwrap();
        assert_eq!(out, txs);
    }

    #[test]
    fn malicious_values_exceed_normal_99th_percentile() {
        let cfg = SimConfig::default();
        let model = TxModel::new(&cfg).unwrap();
        let txs = stream(5000, &cfg, &model);
        let scenario = InjectionScenario {
            malicious: 50,
            side_channel: 5,
            ..InjectionScenario::default()
        };
        let out = inject_transactions(txs, &scenario, &cfg, &model, &mut SeededRng::new(3, Stream::Injection)).unwrap();
        assert_eq!(out.len(), 5055);
        let mut normal: Vec<f64> = out.iter().filter(|t| t.flavor == Flavor::Normal).map(|t| t.value).collect();
        normal.sort_by(f64::total_cmp);
        let p99 = normal[(0.99 * normal.len() as f64) as usize];
        let malicious: Vec<&Transaction> = out.iter().filter(|t| t.flavor == Flavor::Malicious).collect();
        assert_eq!(malicious.len(), 50);
        assert!(malicious.iter().all(|t| t.value > p99));
        assert_eq!(out.iter().filter(|t| t.flavor == Flavor::FakeSideChannel).count(), 5);
        assert!(out.iter().enumerate().all(|(i, t)| t.id == i as u64));
        assert!(out.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }
}
