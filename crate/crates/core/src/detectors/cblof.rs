//! Cluster-based local outlier factor.
//!
//! Clusters come from an internal K-means run and are ordered by size. The
//! first `boundary` clusters are "large"; a point whose nearest cluster is
//! small is scored against the closest large centroid instead.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_fit, split_centroids, KmeansModel};
use super::{check_dim, dist, nearest};
use crate::data::{Dataset, DetectorKind, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CblofParams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_iter: usize,
}

impl Default for CblofParams {
    fn default() -> Self {
        Self {
            k: 8,
            alpha: 0.9,
            beta: 5.0,
            max_iter: 100,
        }
    }
}

impl CblofParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParameter("CBLOF needs k >= 2".into()));
        }
        if !(0.5..1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter("CBLOF alpha must lie in [0.5, 1)".into()));
        }
        if !(self.beta > 1.0) {
            return Err(Error::InvalidParameter("CBLOF beta must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CblofModel {
    /// Sorted by cluster size, largest first.
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<u64>,
    /// Number of large clusters (1-based boundary index).
    pub boundary: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Smallest `b` with cumulative size ≥ alpha·n, or |F_b| / |F_{b+1}| ≥ beta.
pub fn boundary_index(sizes: &[u64], alpha: f64, beta: f64) -> usize {
    let n: u64 = sizes.iter().sum();
    let target = alpha * n as f64 - 1e-9;
    let mut cumulative = 0u64;
    for b in 1..=sizes.len() {
        cumulative += sizes[b - 1];
        if cumulative as f64 >= target {
            return b;
        }
        if b < sizes.len() && sizes[b] > 0 && sizes[b - 1] as f64 / sizes[b] as f64 >= beta {
            return b;
        }
    }
    sizes.len()
}

pub fn cblof_fit(data: &Dataset, params: &CblofParams, rng: &mut dyn RngCore) -> Result<CblofModel> {
    params.validate()?;
    let km = kmeans_fit(data, params.k, params.max_iter, rng)?;
    CblofModel::from_clusters(km.centroids, km.counts, params.alpha, params.beta)
}

impl CblofModel {
    /// Orders clusters by size (stable) and places the large/small boundary.
    pub fn from_clusters(centroids: Vec<Vec<f64>>, sizes: Vec<u64>, alpha: f64, beta: f64) -> Result<Self> {
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::DegenerateClustering(c));
        }
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
        let centroids: Vec<Vec<f64>> = order.iter().map(|&i| centroids[i].clone()).collect();
        let sizes: Vec<u64> = order.iter().map(|&i| sizes[i]).collect();
        let boundary = boundary_index(&sizes, alpha, beta);
        Ok(Self {
            centroids,
            sizes,
            boundary,
            alpha,
            beta,
        })
    }

    /// The clustering as a K-means model (for warm-started local refits).
    pub fn as_kmeans(&self) -> KmeansModel {
        KmeansModel {
            centroids: self.centroids.clone(),
            counts: self.sizes.clone(),
            inertia_history: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn is_large(&self, cluster: usize) -> bool {
        cluster < self.boundary
    }

    pub fn score(&self, t: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), t)?;
        let (i, d2) = nearest(&self.centroids, t);
        let size = self.sizes[i] as f64;
        if self.is_large(i) {
            return Ok(size * d2.sqrt());
        }
        let to_large = self.centroids[..self.boundary]
            .iter()
            .map(|c| dist(t, c))
            .fold(f64::INFINITY, f64::min);
        Ok(size * to_large)
    }

    /// Same layout as K-means: centroids row-major, then sizes.
    pub fn export(&self) -> ModelParams {
        let mut values: Vec<f64> = self.centroids.iter().flatten().copied().collect();
        values.extend(self.sizes.iter().map(|&c| c as f64));
        ModelParams::new(DetectorKind::Cblof, values, self.sizes.iter().sum())
    }

    pub fn import(dim: usize, alpha: f64, beta: f64, params: &ModelParams) -> Result<Self> {
        let (centroids, sizes) = split_centroids(dim, &params.values)?;
        Self::from_clusters(centroids, sizes, alpha, beta)
    }
}
