//! The five anomaly scorers and the uniform surface the federation drives them through.
//!
//! Every model exposes `fit`, a pure `score`, and an exact export/import of its
//! state as a flat [`ModelParams`] vector. Higher scores are more anomalous.

pub mod cblof;
pub mod iforest;
pub mod kmeans;
pub mod ned;
pub mod pca;
pub mod threshold;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{validate_dataset, Dataset, DetectorKind, ModelParams};
use crate::error::{Error, Result};

pub use cblof::{cblof_fit, CblofModel, CblofParams};
pub use iforest::{if_fit, IfParams, IsoForest};
pub use kmeans::{kmeans_fit, KmeansModel, KmeansParams};
pub use ned::{ned_fit, NedArchitecture, NedModel, NedParams};
pub use pca::{pca_fit, PcaModel, PcaParams};
pub use threshold::{robust_z_scores, score_to_label, HuntThreshold};

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Index and squared distance of the nearest centroid (lowest index on ties).
pub fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::WrongDimension {
            expected,
            actual: x.len(),
        });
    }
    Ok(())
}

/// Hyperparameters for every detector; `kind` selects the active one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub ned: NedParams,
    pub iforest: IfParams,
    pub cblof: CblofParams,
    pub pca: PcaParams,
    pub kmeans: KmeansParams,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Ned,
            ned: NedParams::default(),
            iforest: IfParams::default(),
            cblof: CblofParams::default(),
            pca: PcaParams::default(),
            kmeans: KmeansParams::default(),
        }
    }
}

impl DetectorConfig {
    pub fn for_kind(kind: DetectorKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }
}

/// A fitted detector of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ned(NedModel),
    IsolationForest(IsoForest),
    Cblof(CblofModel),
    Pca(PcaModel),
    Kmeans(KmeansModel),
}

impl Model {
    /// Centralized fit with the detector's own hyperparameters.
    ///
    /// The isolation-forest subsample is capped at the dataset size.
    pub fn fit(cfg: &DetectorConfig, data: &Dataset, rng: &mut dyn RngCore) -> Result<Model> {
        validate_dataset(data)?;
        Ok(match cfg.kind {
            DetectorKind::Ned => Model::Ned(ned_fit(data, &cfg.ned, rng)?),
            DetectorKind::IsolationForest => {
                let psi = cfg.iforest.subsample.min(data.len());
                Model::IsolationForest(if_fit(data, cfg.iforest.trees, psi, rng)?)
            }
            DetectorKind::Cblof => Model::Cblof(cblof_fit(data, &cfg.cblof, rng)?),
            DetectorKind::Pca => Model::Pca(pca_fit(data, &cfg.pca)?),
            DetectorKind::Kmeans => {
                Model::Kmeans(kmeans_fit(data, cfg.kmeans.k, cfg.kmeans.max_iter, rng)?)
            }
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Model::Ned(_) => DetectorKind::Ned,
            Model::IsolationForest(_) => DetectorKind::IsolationForest,
            Model::Cblof(_) => DetectorKind::Cblof,
            Model::Pca(_) => DetectorKind::Pca,
            Model::Kmeans(_) => DetectorKind::Kmeans,
        }
    }

    /// Raw feature dimension (before any NED windowing).
    pub fn dimension(&self) -> usize {
        match self {
            Model::Ned(m) => m.input_dim() / m.window(),
            Model::IsolationForest(m) => m.dimension(),
            Model::Cblof(m) => m.dimension(),
            Model::Pca(m) => m.dimension(),
            Model::Kmeans(m) => m.dimension(),
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Ned(m) => m.score(x),
            Model::IsolationForest(m) => m.score(x),
            Model::Cblof(m) => m.score(x),
            Model::Pca(m) => m.score(x),
            Model::Kmeans(m) => m.score(x),
        }
    }

    /// Scores every sample of raw data, windowing first for NED.
    pub fn score_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if let Model::Ned(m) = self {
            return m.prepare(data).rows().map(|r| m.score(r)).collect();
        }
        data.rows().map(|r| self.score(r)).collect()
    }

    pub fn export(&self) -> ModelParams {
        match self {
            Model::Ned(m) => m.export(),
            Model::IsolationForest(m) => m.export(),
            Model::Cblof(m) => m.export(),
            Model::Pca(m) => m.export(),
            Model::Kmeans(m) => m.export(),
        }
    }

    /// Rebuilds a model from its export. `dim` is the input dimension
    /// the parameters were produced for.
    pub fn import(cfg: &DetectorConfig, dim: usize, params: &ModelParams) -> Result<Model> {
        if params.kind != cfg.kind {
            return Err(Error::KindMismatch {
                expected: cfg.kind,
                actual: params.kind,
            });
        }
        Ok(match cfg.kind {
            DetectorKind::Ned => {
                Model::Ned(NedModel::import(&cfg.ned.architecture(dim)?, cfg.ned.window, params)?)
            }
            DetectorKind::IsolationForest => Model::IsolationForest(IsoForest::import(params)?),
            DetectorKind::Cblof => Model::Cblof(CblofModel::import(
                dim,
                cfg.cblof.alpha,
                cfg.cblof.beta,
                params,
            )?),
            DetectorKind::Pca => Model::Pca(PcaModel::import(params)?),
            DetectorKind::Kmeans => Model::Kmeans(KmeansModel::import(dim, params)?),
        })
    }
}
