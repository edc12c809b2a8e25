//! Mahalanobis-distance scorer with iterative trimming of distant points.
//!
//! A model is fully determined by its raw moments (Σx, Σxxᵀ, n), which is
//! also its export: `Σx ‖ vec(Σxxᵀ)` with `n` as the sample count.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::check_dim;
use crate::data::{validate_dataset, Dataset, DetectorKind, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcaParams {
    /// Chi-square quantile above which points are trimmed; `None` disables trimming.
    pub trim_quantile: Option<f64>,
    pub max_iter: usize,
}

impl Default for PcaParams {
    fn default() -> Self {
        Self {
            trim_quantile: Some(0.975),
            max_iter: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Population covariance plus the ridge εI.
    pub covariance: DMatrix<f64>,
    pub inverse_covariance: DMatrix<f64>,
    /// Eigenvalues, descending.
    pub variances: Vec<f64>,
    /// Columns are the matching eigenvectors.
    pub components: DMatrix<f64>,
    pub trim_iterations: usize,
    pub removed: Vec<usize>,
    sum: Vec<f64>,
    sum_outer: Vec<f64>,
    n: u64,
}

/// Raw moments of the rows at `indices`.
fn moments(rows: &[&[f64]], indices: &[usize], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; d];
    let mut outer = vec![0.0; d * d];
    for &i in indices {
        let x = rows[i];
        for a in 0..d {
            sum[a] += x[a];
            for b in 0..d {
                outer[a * d + b] += x[a] * x[b];
            }
        }
    }
    (sum, outer)
}

/// Scale that makes a covariance estimated from a normal sample truncated at
/// chi2_d(q) consistent again: q / P(chi2_{d+2} ≤ chi2_d(q)).
fn truncation_consistency(d: usize, q: f64, cutoff: f64) -> f64 {
    let wider = ChiSquared::new((d + 2) as f64).expect("positive degrees of freedom");
    q / wider.cdf(cutoff)
}

pub fn pca_fit(data: &Dataset, params: &PcaParams) -> Result<PcaModel> {
    validate_dataset(data)?;
    if params.max_iter == 0 {
        return Err(Error::InvalidParameter("PCA max_iter must be >= 1".into()));
    }
    let d = data.dimension();
    let rows: Vec<&[f64]> = data.rows().collect();
    let mut kept: Vec<usize> = (0..rows.len()).collect();
    let mut removed = Vec::new();
    let mut rounds = 0;
    if let Some(q) = params.trim_quantile {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter("PCA trim quantile must lie in (0, 1)".into()));
        }
        let chi = ChiSquared::new(d as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let cutoff = chi.inverse_cdf(q);
        let scale = truncation_consistency(d, q, cutoff);
        for round in 0..params.max_iter {
            let (sum, outer) = moments(&rows, &kept, d);
            let model = PcaModel::from_moments(sum, outer, kept.len() as u64)?;
            // After the first round the sample is truncated; rescale to compare.
            let factor = if round == 0 { 1.0 } else { scale };
            let (stay, gone): (Vec<usize>, Vec<usize>) = kept
                .iter()
                .partition(|&&i| model.squared_distance_unchecked(rows[i]) / factor <= cutoff);
            if gone.is_empty() {
                break;
            }
            rounds += 1;
            removed.extend(gone);
            kept = stay;
        }
    }
    let (sum, outer) = moments(&rows, &kept, d);
    let mut model = PcaModel::from_moments(sum, outer, kept.len() as u64)?;
    removed.sort_unstable();
    model.trim_iterations = rounds;
    model.removed = removed;
    Ok(model)
}

impl PcaModel {
    /// Builds the model from Σx, row-major Σxxᵀ and n.
    pub fn from_moments(sum: Vec<f64>, sum_outer: Vec<f64>, n: u64) -> Result<Self> {
        let d = sum.len();
        if d == 0 {
            return Err(Error::EmptyDataset);
        }
        if sum_outer.len() != d * d {
            return Err(Error::LengthMismatch {
                expected: d * d,
                actual: sum_outer.len(),
            });
        }
        if n as usize <= d {
            return Err(Error::RankCollapse { n: n as usize, d });
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let mut s = DMatrix::from_fn(d, d, |a, b| sum_outer[a * d + b] / nf - mean[a] * mean[b]);
        s = (&s + s.transpose()) * 0.5;
        let eps = 1e-9 * s.trace().max(0.0) / d as f64;
        let eps = if eps > 0.0 { eps } else { 1e-12 };
        for i in 0..d {
            s[(i, i)] += eps;
        }
        let inverse_covariance = Cholesky::new(s.clone())
            .ok_or(Error::RankCollapse { n: n as usize, d })?
            .inverse();
        let eig = SymmetricEigen::new(s.clone());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let variances = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let components = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self {
            mean,
            covariance: s,
            inverse_covariance,
            variances,
            components,
            trim_iterations: 0,
            removed: Vec::new(),
            sum,
            sum_outer,
            n,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_count(&self) -> u64 {
        self.n
    }

    fn squared_distance_unchecked(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        let solved = &self.inverse_covariance * &diff;
        diff.dot(&solved).max(0.0)
    }

    /// D² = (x − x̄)ᵀ S⁻¹ (x − x̄)
    pub fn squared_distance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), x)?;
        Ok(self.squared_distance_unchecked(x))
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.squared_distance(x)?.sqrt())
    }

    pub fn export(&self) -> ModelParams {
        let mut values = self.sum.clone();
        values.extend_from_slice(&self.sum_outer);
        ModelParams::new(DetectorKind::Pca, values, self.n)
    }

    pub fn import(params: &ModelParams) -> Result<Self> {
        let len = params.values.len();
        // len = d + d²
        let d = ((((1 + 4 * len) as f64).sqrt() - 1.0) / 2.0).round() as usize;
        if d + d * d != len || d == 0 {
            return Err(Error::SchemaMismatch(format!(
                "PCA parameters of length {len} are not d + d²"
            )));
        }
        Self::from_moments(params.values[..d].to_vec(), params.values[d..].to_vec(), params.sample_count)
    }
}
