//! K-means with k-means++ seeding; anomaly score is the Euclidean distance
//! to the nearest centroid.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_dim, nearest, sq_dist};
use crate::data::{validate_dataset, Dataset, DetectorKind, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansParams {
    pub k: usize,
    pub max_iter: usize,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self { k: 8, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansModel {
    pub centroids: Vec<Vec<f64>>,
    /// Training points assigned to each centroid.
    pub counts: Vec<u64>,
    /// Total within-cluster squared distance after each assignment step.
    pub inertia_history: Vec<f64>,
}

/// Output of a Lloyd run.
#[derive(Debug, Clone)]
pub struct LloydResult {
    pub centroids: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
    pub assignments: Vec<usize>,
    pub inertia_history: Vec<f64>,
}

/// k-means++ seeding: first centroid uniform, then proportional to squared
/// distance from the chosen set.
pub fn kmeans_plus_plus(rows: &[&[f64]], k: usize, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(rows[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].to_vec();
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from the given centroids until assignments repeat or
/// `max_iter` assignment steps have run. An emptied cluster is reseeded to the
/// point farthest from its current centroid.
pub fn lloyd(rows: &[&[f64]], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> Result<LloydResult> {
    let n = rows.len();
    let k = centroids.len();
    let d = centroids.first().map_or(0, Vec::len);
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut point_d2 = vec![0.0; n];
        for (i, r) in rows.iter().enumerate() {
            let (c, d2) = nearest(&centroids, r);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            point_d2[i] = d2;
            inertia += d2;
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0u64; k];
        for (i, r) in rows.iter().enumerate() {
            let c = assignments[i];
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let m = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / m).collect();
                continue;
            }
            // farthest point from its own centroid that is not the sole member
            // of its cluster and has not been used by another reseed
            let candidate = (0..n)
                .filter(|&i| !taken[i] && counts[assignments[i]] > 1 && point_d2[i] > 0.0)
                .max_by(|&a, &b| point_d2[a].total_cmp(&point_d2[b]).then(b.cmp(&a)));
            match candidate {
                Some(i) => {
                    taken[i] = true;
                    counts[assignments[i]] -= 1;
                    centroids[c] = rows[i].to_vec();
                }
                None => return Err(Error::DegenerateClustering(c)),
            }
        }
    }
    let mut counts = vec![0u64; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    Ok(LloydResult {
        centroids,
        counts,
        assignments,
        inertia_history: history,
    })
}

pub fn kmeans_fit(data: &Dataset, k: usize, max_iter: usize, rng: &mut dyn RngCore) -> Result<KmeansModel> {
    validate_dataset(data)?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > data.len() {
        return Err(Error::KTooLarge { k, n: data.len() });
    }
    let rows: Vec<&[f64]> = data.rows().collect();
    let init = kmeans_plus_plus(&rows, k, rng);
    KmeansModel::from_lloyd(lloyd(&rows, init, max_iter)?)
}

impl KmeansModel {
    fn from_lloyd(r: LloydResult) -> Result<Self> {
        if let Some(c) = r.counts.iter().position(|&c| c == 0) {
            return Err(Error::DegenerateClustering(c));
        }
        Ok(Self {
            centroids: r.centroids,
            counts: r.counts,
            inertia_history: r.inertia_history,
        })
    }

    /// Lloyd iterations on `data` starting from this model's centroids.
    pub fn refit(&self, data: &Dataset, max_iter: usize) -> Result<Self> {
        validate_dataset(data)?;
        if self.k() > data.len() {
            return Err(Error::KTooLarge {
                k: self.k(),
                n: data.len(),
            });
        }
        let rows: Vec<&[f64]> = data.rows().collect();
        Self::from_lloyd(lloyd(&rows, self.centroids.clone(), max_iter)?)
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dimension(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Mean squared distance of `data` to the nearest centroid.
    pub fn mean_inertia(&self, data: &Dataset) -> f64 {
        let total: f64 = data.rows().map(|r| nearest(&self.centroids, r).1).sum();
        total / data.len().max(1) as f64
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), x)?;
        Ok(nearest(&self.centroids, x).1.sqrt())
    }

    /// Centroids row-major, then per-centroid counts.
    pub fn export(&self) -> ModelParams {
        let mut values: Vec<f64> = self.centroids.iter().flatten().copied().collect();
        values.extend(self.counts.iter().map(|&c| c as f64));
        ModelParams::new(DetectorKind::Kmeans, values, self.counts.iter().sum())
    }

    pub fn import(dim: usize, params: &ModelParams) -> Result<Self> {
        let (centroids, counts) = split_centroids(dim, &params.values)?;
        Ok(Self {
            centroids,
            counts,
            inertia_history: Vec::new(),
        })
    }
}

/// Splits a `centroids ‖ counts` vector for dimension `dim`.
pub(crate) fn split_centroids(dim: usize, values: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<u64>)> {
    if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim + 1) {
        return Err(Error::LengthMismatch {
            expected: (dim + 1) * (values.len() / (dim + 1)).max(1),
            actual: values.len(),
        });
    }
    let k = values.len() / (dim + 1);
    let centroids = values[..k * dim].chunks(dim).map(<[f64]>::to_vec).collect();
    let counts = values[k * dim..].iter().map(|&c| c as u64).collect();
    Ok((centroids, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeededRng, Stream};

    fn rng() -> SeededRng {
        SeededRng::new(11, Stream::Detector)
    }

    fn triples() -> Dataset {
        Dataset::from_rows(
            "triples",
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![10.0, 10.0],
                vec![11.0, 10.0],
                vec![10.0, 12.0],
            ],
        )
    }

    /// Exhaustive minimum-SSE 2-partition.
    fn brute_force_two_means(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = rows.len();
        let mut best = (f64::INFINITY, Vec::new());
        for mask in 1u32..(1 << n) - 1 {
            let mut groups = [Vec::new(), Vec::new()];
            for (i, r) in rows.iter().enumerate() {
                groups[(mask >> i & 1) as usize].push(r.clone());
            }
            let means: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| {
                    (0..2)
                        .map(|j| g.iter().map(|r| r[j]).sum::<f64>() / g.len() as f64)
                        .collect()
                })
                .collect();
            let sse: f64 = groups
                .iter()
                .zip(&means)
                .map(|(g, m)| g.iter().map(|r| sq_dist(r, m)).sum::<f64>())
                .sum();
            if sse < best.0 {
                best = (sse, means);
            }
        }
        best.1
    }

    #[test]
    fn matches_exhaustive_optimum() {
        let data = triples();
        let rows: Vec<Vec<f64>> = data.rows().map(<[f64]>::to_vec).collect();
        let mut oracle = brute_force_two_means(&rows);
        let model = kmeans_fit(&data, 2, 100, &mut rng()).unwrap();
        let mut got = model.centroids.clone();
        let key = |c: &Vec<f64>| c[0];
        oracle.sort_by(|a, b| key(a).total_cmp(&key(b)));
        got.sort_by(|a, b| key(a).total_cmp(&key(b)));
        for (a, b) in oracle.iter().zip(&got) {
            assert!(sq_dist(a, b) < 1e-20);
        }
    }

    #[test]
    fn k_equals_n_memorizes_points() {
        let data = triples();
        let model = kmeans_fit(&data, 6, 100, &mut rng()).unwrap();
        for r in data.rows() {
            assert_eq!(model.score(r).unwrap(), 0.0);
        }
        assert!(model.counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn rejects_k_above_n() {
        assert!(matches!(
            kmeans_fit(&triples(), 7, 10, &mut rng()),
            Err(Error::KTooLarge { k: 7, n: 6 })
        ));
    }

    #[test]
    fn same_seed_same_centroids() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| vec![(i as f64 * 0.37).sin() * 5.0, (i as f64 * 0.11).cos() * 3.0])
            .collect();
        let data = Dataset::from_rows("wave", rows);
        let a = kmeans_fit(&data, 5, 50, &mut rng()).unwrap();
        let b = kmeans_fit(&data, 5, 50, &mut rng()).unwrap();
        assert_eq!(a, b);
        for w in a.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn three_four_five_score() {
        let model = KmeansModel {
            centroids: vec![vec![0.0, 0.0], vec![10.0, 0.0]],
            counts: vec![1, 1],
            inertia_history: vec![],
        };
        assert_eq!(model.score(&[4.0, 3.0]).unwrap(), 5.0);
        assert_eq!(model.score(&[10.0, 0.0]).unwrap(), 0.0);
        let swapped = KmeansModel {
            centroids: vec![vec![10.0, 0.0], vec![0.0, 0.0]],
            ..model.clone()
        };
        assert_eq!(swapped.score(&[4.0, 3.0]).unwrap(), 5.0);
        assert!(model.score(&[1.0]).is_err());
    }

    #[test]
    fn export_round_trips() {
        let model = kmeans_fit(&triples(), 2, 100, &mut rng()).unwrap();
        let back = KmeansModel::import(2, &model.export()).unwrap();
        assert_eq!(back.centroids, model.centroids);
        assert_eq!(back.counts, model.counts);
    }

    #[test]
    fn warm_start_from_converged_is_fixed_point() {
        let data = triples();
        let model = kmeans_fit(&data, 2, 100, &mut rng()).unwrap();
        let again = model.refit(&data, 100).unwrap();
        assert_eq!(again.centroids, model.centroids);
        assert_eq!(again.counts, model.counts);
    }
}
