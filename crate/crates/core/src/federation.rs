//! Parameter server, client selection, local rounds and per-detector FedAvg.

use std::path::Path;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{validate_dataset, ColumnMoments, Dataset, DetectorKind, ModelParams, ScalerState, SeededRng, Stream};
use crate::detectors::cblof::CblofModel;
use crate::detectors::iforest::{ITree, IsoForest};
use crate::detectors::kmeans::{split_centroids, KmeansModel};
use crate::detectors::{
    cblof_fit, if_fit, kmeans_fit, nearest, pca_fit, score_to_label, sq_dist, DetectorConfig, Model, NedModel,
};
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, RecallConvention};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederatedConfig {
    pub clusters: usize,
    pub local_epochs: usize,
    pub local_batch: usize,
    pub learning_rate: f64,
    pub participation: f64,
    pub rounds: usize,
    pub seed: u64,
    pub detector: DetectorConfig,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        Self {
            clusters: 50,
            local_epochs: 4,
            local_batch: 15,
            learning_rate: 0.03,
            participation: 0.006,
            rounds: 50,
            seed: 0,
            detector: DetectorConfig::default(),
        }
    }
}

impl FederatedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.clusters == 0 {
            return bad("clusters K must be >= 1");
        }
        if self.local_epochs == 0 {
            return bad("local epochs E must be >= 1");
        }
        if self.local_batch == 0 {
            return bad("local batch B must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be > 0");
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return bad("participation fraction C must lie in (0, 1]");
        }
        Ok(())
    }

    /// max(1, ⌊C·K⌋)
    pub fn participants_per_round(&self) -> usize {
        ((self.participation * self.clusters as f64 + 1e-9).floor() as usize)
            .clamp(1, self.clusters)
    }
}

/// Transport between server and clients. Encryption would live here; the
/// shipped codec is the identity.
pub trait ParamCodec: Send + Sync {
    fn seal(&self, params: ModelParams) -> ModelParams;
    fn open(&self, params: ModelParams) -> ModelParams;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityCodec;

impl ParamCodec for IdentityCodec {
    fn seal(&self, params: ModelParams) -> ModelParams {
        params
    }
    fn open(&self, params: ModelParams) -> ModelParams {
        params
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: u32,
    pub data: Dataset,
    pub params: ModelParams,
    pub last_trained_round: Option<u32>,
    rng: SeededRng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub global: ModelParams,
    pub round: u32,
    pub loss_history: Vec<f64>,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub participants: Vec<u32>,
    pub loss: f64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundLog {
    pub records: Vec<RoundRecord>,
}

impl RoundLog {
    pub const CSV_HEADER: [&'static str; 4] = ["round", "participants", "loss", "duration_ms"];

    /// Participant ids are joined with `;`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.records {
            let ids: Vec<String> = r.participants.iter().map(u32::to_string).collect();
            w.write_record([
                r.round.to_string(),
                ids.join(";"),
                format!("{:.9}", r.loss),
                r.duration_ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn zero_durations(&mut self) {
        self.records.iter_mut().for_each(|r| r.duration_ms = 0);
    }
}

/// Pools per-client column moments into one standardizer, so no raw rows leave a client.
pub fn federated_scaler(datasets: &[Dataset]) -> Result<ScalerState> {
    let moments: Vec<ColumnMoments> = datasets.iter().map(ColumnMoments::of).collect();
    ScalerState::from_moments(&moments)
}

pub struct Federation {
    pub config: FederatedConfig,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    selection_rng: SeededRng,
    codec: Box<dyn ParamCodec>,
}

impl std::fmt::Debug for Federation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Federation")
            .field("config", &self.config)
            .field("server", &self.server)
            .field("clients", &self.clients.len())
            .finish()
    }
}

/// Fresh generator for a one-shot local fit.
fn client_fit_rng(seed: u64, client: u32) -> SeededRng {
    SeededRng::new(seed, Stream::Client(client))
}

impl Federation {
    pub fn new(config: FederatedConfig, datasets: Vec<Dataset>) -> Result<Self> {
        Self::with_codec(config, datasets, Box::new(IdentityCodec))
    }

    pub fn with_codec(config: FederatedConfig, datasets: Vec<Dataset>, codec: Box<dyn ParamCodec>) -> Result<Self> {
        config.validate()?;
        if datasets.is_empty() {
            return Err(Error::EmptyFederation);
        }
        if datasets.len() != config.clusters {
            return Err(Error::ConfigInvalid(format!(
                "{} client datasets for K = {}",
                datasets.len(),
                config.clusters
            )));
        }
        let dimension = datasets[0].dimension();
        for d in &datasets {
            validate_dataset(d)?;
            if d.dimension() != dimension {
                return Err(Error::DimensionMismatch(d.dimension()));
            }
        }
        let kind = config.detector.kind;
        let global = match kind {
            DetectorKind::Ned => {
                let arch = config.detector.ned.architecture(dimension)?;
                let mut init_rng = SeededRng::new(config.seed, Stream::FederationInit);
                NedModel::init(&arch, config.detector.ned.window, &mut init_rng).export()
            }
            _ => ModelParams::empty(kind),
        };
        let clients = datasets
            .into_iter()
            .enumerate()
            .map(|(k, data)| ClientState {
                id: k as u32,
                data,
                params: global.clone(),
                last_trained_round: None,
                rng: client_fit_rng(config.seed, k as u32),
            })
            .collect();
        Ok(Self {
            server: ServerState {
                global,
                round: 0,
                loss_history: Vec::new(),
                dimension,
            },
            clients,
            selection_rng: SeededRng::new(config.seed, Stream::Selection),
            codec,
            config,
        })
    }

    /// Uniform choice of max(1, ⌊C·K⌋) clients without replacement, sorted by id.
    pub fn select_participants(&mut self) -> Vec<u32> {
        select(self.clients.len(), self.config.participants_per_round(), &mut self.selection_rng)
    }

    /// One round: select, broadcast, train locally in parallel, aggregate.
    pub fn step(&mut self) -> Result<RoundRecord> {
        let started = Instant::now();
        let participants = self.select_participants();
        let round = self.server.round + 1;
        let broadcast = self.codec.seal(self.server.global.clone());
        let cfg = &self.config;
        let codec = &self.codec;
        let dim = self.server.dimension;
        let results: Vec<Result<(ModelParams, f64)>> = self
            .clients
            .par_iter_mut()
            .filter(|c| participants.contains(&c.id))
            .map(|client| {
                client.params = codec.open(broadcast.clone());
                let (mut update, loss) = local_train(client, cfg, dim)?;
                update.round = round;
                update.source = client.id;
                client.last_trained_round = Some(round);
                Ok((codec.seal(update), loss))
            })
            .collect();
        let mut updates = Vec::with_capacity(results.len());
        let mut weighted_loss = 0.0;
        let mut total = 0.0;
        for r in results {
            let (u, loss) = r?;
            let u = self.codec.open(u);
            weighted_loss += loss * u.sample_count as f64;
            total += u.sample_count as f64;
            updates.push(u);
        }
        let mut global = fedavg(&self.config.detector, dim, &self.server.global, &updates)?;
        global.round = round;
        global.source = ModelParams::SERVER;
        self.server.global = global;
        self.server.round = round;
        let loss = weighted_loss / total;
        self.server.loss_history.push(loss);
        Ok(RoundRecord {
            round,
            participants,
            loss,
            duration_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// Runs the configured number of rounds.
    pub fn run(&mut self) -> Result<RoundLog> {
        let mut log = RoundLog::default();
        for _ in 0..self.config.rounds {
            log.records.push(self.step()?);
        }
        Ok(log)
    }

    pub fn global_model(&self) -> Result<Model> {
        if self.server.global.is_empty() {
            return Err(Error::InvalidParameter("no round has been aggregated yet".into()));
        }
        Model::import(&self.config.detector, self.server.dimension, &self.server.global)
    }

    /// Scores a labeled test set with the global model and thresholds by contamination.
    pub fn evaluate_global(&self, test: &Dataset, contamination: f64) -> Result<MetricsReport> {
        evaluate(&self.global_model()?, test, contamination)
    }
}

pub fn evaluate(model: &Model, test: &Dataset, contamination: f64) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let truth = test.anomaly_flags()?;
    let scores = model.score_dataset(test)?;
    let predicted = score_to_label(&scores, contamination);
    MetricsReport::build(&scores, &truth, &predicted, RecallConvention::Standard)
}

pub fn select(clients: usize, count: usize, rng: &mut dyn RngCore) -> Vec<u32> {
    let mut ids: Vec<u32> = rand::seq::index::sample(rng, clients, count.min(clients))
        .iter()
        .map(|i| i as u32)
        .collect();
    ids.sort_unstable();
    ids
}

fn mean_sq_to_centroids(data: &Dataset, centroids: &[Vec<f64>]) -> f64 {
    data.rows().map(|x| nearest(centroids, x).1).sum::<f64>() / data.len() as f64
}

fn mean_score(model: &Model, data: &Dataset) -> Result<f64> {
    let scores = model.score_dataset(data)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Trains on the client's shard starting from the broadcast global and
/// returns the update with its local training loss.
pub fn local_train(client: &mut ClientState, cfg: &FederatedConfig, dim: usize) -> Result<(ModelParams, f64)> {
    let det = &cfg.detector;
    let data = &client.data;
    let n = data.len() as u64;
    let fresh_start = client.params.is_empty();
    let mut rng = client_fit_rng(cfg.seed, client.id);
    let (params, loss) = match det.kind {
        DetectorKind::Ned => {
            let arch = det.ned.architecture(dim)?;
            let mut model = NedModel::import(&arch, det.ned.window, &client.params)?;
            let losses = model.train(data, cfg.local_epochs, cfg.local_batch, cfg.learning_rate, &mut client.rng)?;
            (model.export(), losses.last().copied().unwrap_or(f64::NAN))
        }
        DetectorKind::IsolationForest => {
            let psi = det.iforest.subsample.min(data.len());
            let forest = if_fit(data, det.iforest.trees, psi, &mut rng)?;
            let model = Model::IsolationForest(forest);
            let loss = mean_score(&model, data)?;
            (model.export(), loss)
        }
        DetectorKind::Pca => {
            let model = Model::Pca(pca_fit(data, &det.pca)?);
            let loss = match &model {
                Model::Pca(m) => data.rows().map(|x| m.squared_distance(x)).sum::<Result<f64>>()? / n as f64,
                _ => unreachable!(),
            };
            (model.export(), loss)
        }
        DetectorKind::Kmeans => {
            let model = if fresh_start {
                kmeans_fit(data, det.kmeans.k, det.kmeans.max_iter, &mut rng)?
            } else {
                KmeansModel::import(dim, &client.params)?.refit(data, det.kmeans.max_iter)?
            };
            let loss = mean_sq_to_centroids(data, &model.centroids);
            (model.export(), loss)
        }
        DetectorKind::Cblof => {
            let model = if fresh_start {
                cblof_fit(data, &det.cblof, &mut rng)?
            } else {
                let global = CblofModel::import(dim, det.cblof.alpha, det.cblof.beta, &client.params)?;
                let km = global.as_kmeans().refit(data, det.cblof.max_iter)?;
                CblofModel::from_clusters(km.centroids, km.counts, det.cblof.alpha, det.cblof.beta)?
            };
            let loss = mean_sq_to_centroids(data, &model.centroids);
            (model.export(), loss)
        }
    };
    // PCA moments count only the rows that survived trimming.
    let sample_count = if det.kind == DetectorKind::Pca { params.sample_count } else { n };
    Ok((ModelParams { sample_count, ..params }, loss))
}

/// Aggregates client updates into the next global parameters.
///
/// Updates are ordered by source id first, so the result does not depend
/// on arrival order.
pub fn fedavg(cfg: &DetectorConfig, dim: usize, previous: &ModelParams, updates: &[ModelParams]) -> Result<ModelParams> {
    let first = updates.first().ok_or(Error::EmptyFederation)?;
    for u in updates {
        if u.kind != cfg.kind {
            return Err(Error::KindMismatch {
                expected: cfg.kind,
                actual: u.kind,
            });
        }
        if u.sample_count == 0 {
            return Err(Error::InvalidParameter(format!("update from client {} has no samples", u.source)));
        }
        if cfg.kind != DetectorKind::IsolationForest && u.values.len() != first.values.len() {
            return Err(Error::LengthMismatch {
                expected: first.values.len(),
                actual: u.values.len(),
            });
        }
    }
    let mut sorted: Vec<&ModelParams> = updates.iter().collect();
    sorted.sort_by_key(|u| u.source);
    let total: u64 = sorted.iter().map(|u| u.sample_count).sum();
    match cfg.kind {
        DetectorKind::Ned => Ok(ModelParams::new(cfg.kind, weighted_mean(&sorted), total)),
        DetectorKind::Pca => {
            let mut acc = sorted[0].values.clone();
            for u in &sorted[1..] {
                acc.iter_mut().zip(&u.values).for_each(|(a, v)| *a += v);
            }
            Ok(ModelParams::new(cfg.kind, acc, total))
        }
        DetectorKind::IsolationForest => union_forests(cfg.iforest.trees, &sorted),
        DetectorKind::Kmeans => {
            let (centroids, counts) = merge_centroids(dim, previous, &sorted)?;
            Ok(KmeansModel {
                centroids,
                counts,
                inertia_history: Vec::new(),
            }
            .export())
        }
        DetectorKind::Cblof => {
            let (centroids, counts) = merge_centroids(dim, previous, &sorted)?;
            Ok(CblofModel::from_clusters(centroids, counts, cfg.cblof.alpha, cfg.cblof.beta)?.export())
        }
    }
}

/// Σ_k (n_k/Σn)·v_k, accumulated from the first term.
pub fn weighted_mean(updates: &[&ModelParams]) -> Vec<f64> {
    let total: f64 = updates.iter().map(|u| u.sample_count as f64).sum();
    let w0 = updates[0].sample_count as f64 / total;
    let mut acc: Vec<f64> = updates[0].values.iter().map(|v| w0 * v).collect();
    for u in &updates[1..] {
        let w = u.sample_count as f64 / total;
        acc.iter_mut().zip(&u.values).for_each(|(a, v)| *a += w * v);
    }
    acc
}

/// Greedy one-to-one matching of `ours` onto `reference`: repeatedly pairs
/// the closest remaining (reference, ours) couple. Returns, for each
/// reference slot, the index of the matched centroid in `ours`.
pub fn greedy_match(reference: &[Vec<f64>], ours: &[Vec<f64>]) -> Vec<usize> {
    let k = reference.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
    for (i, r) in reference.iter().enumerate() {
        for (j, o) in ours.iter().enumerate() {
            pairs.push((sq_dist(r, o), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut slot = vec![usize::MAX; k];
    let mut used = vec![false; ours.len()];
    for (_, i, j) in pairs {
        if slot[i] == usize::MAX && !used[j] {
            slot[i] = j;
            used[j] = true;
        }
    }
    slot
}

/// Aligns every update's centroids to a reference and averages them weighted
/// by per-cluster counts; counts are summed.
fn merge_centroids(dim: usize, previous: &ModelParams, updates: &[&ModelParams]) -> Result<(Vec<Vec<f64>>, Vec<u64>)> {
    let parsed: Vec<(Vec<Vec<f64>>, Vec<u64>)> = updates
        .iter()
        .map(|u| split_centroids(dim, &u.values))
        .collect::<Result<_>>()?;
    let reference = if previous.is_empty() {
        parsed[0].0.clone()
    } else {
        split_centroids(dim, &previous.values)?.0
    };
    let k = reference.len();
    if parsed.iter().any(|(c, _)| c.len() != k) {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: parsed.iter().map(|(c, _)| c.len()).find(|&l| l != k).unwrap_or(0),
        });
    }
    let aligned: Vec<(Vec<&Vec<f64>>, Vec<u64>)> = parsed
        .iter()
        .map(|(c, n)| {
            let slots = greedy_match(&reference, c);
            (slots.iter().map(|&j| &c[j]).collect(), slots.iter().map(|&j| n[j]).collect())
        })
        .collect();
    let mut centroids = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    for slot in 0..k {
        let total: u64 = aligned.iter().map(|(_, n)| n[slot]).sum();
        if total == 0 {
            centroids.push(reference[slot].clone());
            counts.push(0);
            continue;
        }
        let mut acc: Option<Vec<f64>> = None;
        for (c, n) in &aligned {
            let w = n[slot] as f64 / total as f64;
            match acc.as_mut() {
                None => acc = Some(c[slot].iter().map(|v| w * v).collect()),
                Some(a) => a.iter_mut().zip(c[slot]).for_each(|(a, v)| *a += w * v),
            }
        }
        centroids.push(acc.unwrap_or_default());
        counts.push(total);
    }
    Ok((centroids, counts))
}

/// Forest union: ⌊T/m⌋ trees from each of the m updates, the remainder
/// going one apiece to the lowest client ids.
fn union_forests(trees: usize, updates: &[&ModelParams]) -> Result<ModelParams> {
    let forests: Vec<IsoForest> = updates.iter().map(|u| IsoForest::import(u)).collect::<Result<_>>()?;
    let dim = forests[0].dimension();
    if let Some(f) = forests.iter().find(|f| f.dimension() != dim) {
        return Err(Error::DimensionMismatch(f.dimension()));
    }
    let m = forests.len();
    let (base, extra) = (trees / m, trees % m);
    let mut union: Vec<ITree> = Vec::with_capacity(trees);
    for (k, f) in forests.iter().enumerate() {
        let quota = base + usize::from(k < extra);
        union.extend(f.trees.iter().take(quota).cloned());
    }
    if union.is_empty() {
        return Err(Error::InvalidParameter("forest union kept no trees".into()));
    }
    let mut params = IsoForest::from_trees(dim, union).export();
    params.sample_count = updates.iter().map(|u| u.sample_count).sum();
    Ok(params)
}
