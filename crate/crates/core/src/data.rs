//! Shared domain types: samples, datasets, exchanged model parameters,
//! column scaling and the deterministic random streams every component draws from.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth class of a sample. `Anomalous` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }

    pub fn from_flag(anomalous: bool) -> Self {
        if anomalous {
            Label::Anomalous
        } else {
            Label::Normal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Stable identifier (row number, transaction id, ...).
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Option<Label>,
    /// Owning cluster / client, when the source knows it.
    pub group: Option<u32>,
}

impl Sample {
    pub fn new(id: u64, features: Vec<f64>) -> Self {
        Self {
            id,
            features,
            label: None,
            group: None,
        }
    }

    pub fn labeled(id: u64, features: Vec<f64>, label: Label) -> Self {
        Self {
            id,
            features,
            label: Some(label),
            group: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Self {
        let d = samples.first().map_or(0, |s| s.features.len());
        Self {
            name: name.into(),
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
            samples,
        }
    }

    /// Unlabeled dataset from raw rows; ids are row indices.
    pub fn from_rows(name: impl Into<String>, rows: Vec<Vec<f64>>) -> Self {
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| Sample::new(i as u64, r))
            .collect();
        Self::new(name, samples)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = names;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Feature dimension taken from the first sample (or the header when empty).
    pub fn dimension(&self) -> usize {
        self.samples
            .first()
            .map_or(self.feature_names.len(), |s| s.features.len())
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.features.as_slice())
    }

    pub fn ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }

    /// Anomaly flags, or `UnlabeledData` naming the first unlabeled sample.
    pub fn anomaly_flags(&self) -> Result<Vec<bool>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.label
                    .map(Label::is_anomalous)
                    .ok_or(Error::UnlabeledData(i))
            })
            .collect()
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Dataset {
        Dataset {
            name: name.into(),
            feature_names: self.feature_names.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Replaces every sample with the concatenation of itself and its
    /// `window - 1` predecessors, the first sample padding the start.
    /// Labels and ids follow the newest sample in each window.
    pub fn windowed(&self, window: usize) -> Dataset {
        if window <= 1 {
            return self.clone();
        }
        let samples = (0..self.samples.len())
            .map(|i| {
                let mut features = Vec::with_capacity(window * self.dimension());
                for lag in (0..window).rev() {
                    features.extend_from_slice(&self.samples[i.saturating_sub(lag)].features);
                }
                Sample {
                    features,
                    ..self.samples[i].clone()
                }
            })
            .collect();
        let feature_names = (0..window)
            .rev()
            .flat_map(|lag| self.feature_names.iter().map(move |n| format!("{n}@t-{lag}")))
            .collect();
        Dataset {
            name: self.name.clone(),
            feature_names,
            samples,
        }
    }
}

/// Checks that a dataset is non-empty, rectangular and finite.
pub fn validate_dataset(data: &Dataset) -> Result<()> {
    let first = data.samples.first().ok_or(Error::EmptyDataset)?;
    let d = first.features.len();
    for (i, s) in data.samples.iter().enumerate() {
        if s.features.len() != d {
            return Err(Error::DimensionMismatch(i));
        }
        if let Some(j) = s.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i, j));
        }
    }
    Ok(())
}

/// Per-column (mean, population sd) captured by [`standardize`].
///
/// A zero sd is recorded as 0 but divides as 1, so constant columns map to zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ScalerState {
    /// Pools per-client sufficient statistics `(n, Σx, Σx²)` into one scaler.
    pub fn from_moments(moments: &[ColumnMoments]) -> Result<Self> {
        let first = moments.first().ok_or(Error::EmptyDataset)?;
        let d = first.sum.len();
        let mut n = 0u64;
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for m in moments {
            if m.sum.len() != d {
                return Err(Error::LengthMismatch {
                    expected: d,
                    actual: m.sum.len(),
                });
            }
            n += m.count;
            for j in 0..d {
                sum[j] += m.sum[j];
                sum_sq[j] += m.sum_sq[j];
            }
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let nf = n as f64;
        let means: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let sds = (0..d)
            .map(|j| {
                let var = (sum_sq[j] / nf - means[j] * means[j]).max(0.0);
                let sd = var.sqrt();
                // Round-off leaves tiny residual variance on constant columns.
                if sd <= 1e-12 * means[j].abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { means, sds })
    }

    fn divisor(&self, j: usize) -> f64 {
        if self.sds[j] > 0.0 {
            self.sds[j]
        } else {
            1.0
        }
    }

    pub fn dimension(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| (v - self.means[j]) / self.divisor(j))
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| v * self.divisor(j) + self.means[j])
            .collect()
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let d = self.dimension();
        let mut out = data.clone();
        for (i, s) in out.samples.iter_mut().enumerate() {
            if s.features.len() != d {
                return Err(Error::DimensionMismatch(i));
            }
            s.features = self.transform_row(&s.features);
        }
        Ok(out)
    }
}

/// Column sufficient statistics a client can share without revealing rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMoments {
    pub count: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl ColumnMoments {
    pub fn of(data: &Dataset) -> Self {
        let d = data.dimension();
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for row in data.rows() {
            for (j, v) in row.iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
        }
        Self {
            count: data.len() as u64,
            sum,
            sum_sq,
        }
    }
}

/// Shifts and scales every column to mean 0 and population sd 1.
pub fn standardize(data: &Dataset) -> Result<(Dataset, ScalerState)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = data.dimension();
    let n = data.len() as f64;
    let mut means = vec![0.0; d];
    for row in data.rows() {
        for j in 0..d {
            means[j] += row[j];
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in data.rows() {
        for j in 0..d {
            let c = row[j] - means[j];
            var[j] += c * c;
        }
    }
    let sds = var.iter().map(|v| (v / n).sqrt()).collect();
    let state = ScalerState { means, sds };
    let scaled = state.transform(data)?;
    Ok((scaled, state))
}

/// Which of the five detectors a model or parameter vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Ned,
    IsolationForest,
    Cblof,
    Pca,
    Kmeans,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Ned,
        DetectorKind::IsolationForest,
        DetectorKind::Cblof,
        DetectorKind::Pca,
        DetectorKind::Kmeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Ned => "ned",
            DetectorKind::IsolationForest => "isolation_forest",
            DetectorKind::Cblof => "cblof",
            DetectorKind::Pca => "pca",
            DetectorKind::Kmeans => "kmeans",
        }
    }

    /// Display name used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::Ned => "NED",
            DetectorKind::IsolationForest => "IF",
            DetectorKind::Cblof => "CBLOF",
            DetectorKind::Pca => "PCA",
            DetectorKind::Kmeans => "K-means",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ned" => Ok(DetectorKind::Ned),
            "if" | "iforest" | "isolation_forest" => Ok(DetectorKind::IsolationForest),
            "cblof" => Ok(DetectorKind::Cblof),
            "pca" => Ok(DetectorKind::Pca),
            "kmeans" | "k-means" => Ok(DetectorKind::Kmeans),
            other => Err(Error::InvalidParameter(format!("unknown detector '{other}'"))),
        }
    }
}

/// Flat parameter vector exchanged between clients and the parameter server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: DetectorKind,
    pub values: Vec<f64>,
    /// Number of training samples behind these values (the FedAvg weight).
    pub sample_count: u64,
    pub round: u32,
    /// Client that produced the update; the server uses `u32::MAX`.
    pub source: u32,
}

impl ModelParams {
    pub const SERVER: u32 = u32::MAX;

    pub fn new(kind: DetectorKind, values: Vec<f64>, sample_count: u64) -> Self {
        Self {
            kind,
            values,
            sample_count,
            round: 0,
            source: Self::SERVER,
        }
    }

    pub fn empty(kind: DetectorKind) -> Self {
        Self::new(kind, Vec::new(), 0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Topology,
    TxGeneration,
    Mining,
    Jitter,
    Injection,
    Synth,
    Shard,
    FederationInit,
    Selection,
    Client(u32),
    Detector,
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Topology => 1,
            Stream::TxGeneration => 2,
            Stream::Mining => 3,
            Stream::Jitter => 4,
            Stream::Injection => 5,
            Stream::Synth => 6,
            Stream::Shard => 7,
            Stream::FederationInit => 8,
            Stream::Selection => 9,
            Stream::Detector => 10,
            Stream::Client(k) => 1 << 32 | u64::from(k),
            Stream::Custom(c) => 1 << 40 | c,
        }
    }
}

/// Counter-based generator (ChaCha8) keyed by `(seed, stream)`.
///
/// Identical `(seed, stream)` pairs always produce identical sequences,
/// independent of how many other streams were drawn from.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream.id());
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ds(rows: Vec<Vec<f64>>) -> Dataset {
        Dataset::from_rows("t", rows)
    }

    #[test]
    fn validate_accepts_well_formed() {
        let d = ds(vec![vec![1.0, 2.0, 3.0, 4.0]; 3]);
        assert!(validate_dataset(&d).is_ok());
    }

    #[test]
    fn validate_reports_first_ragged_row() {
        let d = ds(vec![vec![0.0; 4], vec![0.0; 4], vec![0.0; 5]]);
        assert!(matches!(validate_dataset(&d), Err(Error::DimensionMismatch(2))));
    }

    #[test]
    fn validate_rejects_empty_and_nan() {
        assert!(matches!(validate_dataset(&ds(vec![])), Err(Error::EmptyDataset)));
        let d = ds(vec![vec![0.0, 1.0], vec![0.0, f64::NAN]]);
        assert!(matches!(validate_dataset(&d), Err(Error::NonFiniteValue(1, 1))));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let (out, st) = standardize(&ds(vec![vec![2.0], vec![2.0], vec![2.0]])).unwrap();
        assert!(out.rows().all(|r| r[0] == 0.0));
        assert_eq!(st.sds[0], 0.0);
        assert_eq!(st.transform_row(&[5.0]), vec![3.0]);
    }

    #[test]
    fn population_sd_convention() {
        let (out, st) = standardize(&ds(vec![vec![0.0], vec![2.0]])).unwrap();
        assert_eq!(st.sds[0], 1.0);
        assert_eq!(out.samples[0].features[0], -1.0);
        assert_eq!(out.samples[1].features[0], 1.0);
    }

    #[test]
    fn standardize_is_idempotent_on_fixed_point() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64).sin() * 3.0 + 1.0]).collect();
        let (once, _) = standardize(&ds(rows)).unwrap();
        let (twice, _) = standardize(&once).unwrap();
        for (a, b) in once.rows().zip(twice.rows()) {
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn pooled_moments_match_centralized_scaler() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64 * 0.5 - 3.0, (i % 7) as f64, 4.0])
            .collect();
        let data = ds(rows);
        let (_, central) = standardize(&data).unwrap();
        let a = data.subset("a", &(0..13).collect::<Vec<_>>());
        let b = data.subset("b", &(13..40).collect::<Vec<_>>());
        let pooled =
            ScalerState::from_moments(&[ColumnMoments::of(&a), ColumnMoments::of(&b)]).unwrap();
        for j in 0..3 {
            assert!((pooled.means[j] - central.means[j]).abs() < 1e-12);
            assert!((pooled.sds[j] - central.sds[j]).abs() < 1e-12);
        }
        assert_eq!(pooled.sds[2], 0.0);
    }

    #[test]
    fn windowing_pads_with_first_sample() {
        let d = ds(vec![vec![1.0], vec![2.0], vec![3.0]]);
        let w = d.windowed(2);
        assert_eq!(w.samples[0].features, vec![1.0, 1.0]);
        assert_eq!(w.samples[2].features, vec![2.0, 3.0]);
        assert_eq!(w.dimension(), 2);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = SeededRng::new(7, Stream::Mining);
        let mut b = SeededRng::new(7, Stream::Mining);
        let mut c = SeededRng::new(7, Stream::Jitter);
        let xa: Vec<u64> = (0..8).map(|_| a.random()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.random()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.random()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn standardize_round_trips(rows in prop::collection::vec(
                prop::collection::vec(-1e3f64..1e3, 3), 2..40)) {
                let data = ds(rows);
                let (scaled, st) = standardize(&data).unwrap();
                for (orig, s) in data.rows().zip(scaled.rows()) {
                    let back = st.inverse_row(s);
                    for j in 0..3 {
                        if st.sds[j] > 0.0 {
                            let tol = 1e-9 * orig[j].abs().max(1.0);
                            prop_assert!((back[j] - orig[j]).abs() <= tol);
                        }
                    }
                }
            }
        }
    }
}
