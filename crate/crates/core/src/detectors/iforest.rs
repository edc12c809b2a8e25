//! Isolation forest.
//!
//! Flat export layout: `[dim, T]`, then per tree `[ψ, node_count]` followed by
//! four values per node in pre-order. An internal node is
//! `(feature, split, left, right)`; a leaf is `(-1, size, 0, 0)`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::check_dim;
use crate::data::{validate_dataset, Dataset, DetectorKind, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IfParams {
    pub trees: usize,
    pub subsample: usize,
}

impl Default for IfParams {
    fn default() -> Self {
        Self {
            trees: 100,
            subsample: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        split: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ITree {
    pub psi: usize,
    /// Pre-order; the root is node 0.
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsoForest {
    dim: usize,
    pub trees: Vec<ITree>,
}

/// Harmonic number H(n) summed exactly.
fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

/// Average path length of an unsuccessful BST search among `n` points.
pub fn c_factor(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    2.0 * harmonic(n - 1) - 2.0 * (n - 1) as f64 / n as f64
}

pub fn max_depth(psi: usize) -> usize {
    (psi.max(1) as f64).log2().ceil() as usize
}

pub fn if_fit(data: &Dataset, trees: usize, psi: usize, rng: &mut dyn RngCore) -> Result<IsoForest> {
    validate_dataset(data)?;
    if trees == 0 || psi == 0 {
        return Err(Error::InvalidParameter("IF needs T >= 1 and psi >= 1".into()));
    }
    if psi > data.len() {
        return Err(Error::SubsampleTooLarge { psi, n: data.len() });
    }
    let rows: Vec<&[f64]> = data.rows().collect();
    let trees = (0..trees)
        .map(|_| {
            let picked = rand::seq::index::sample(rng, rows.len(), psi);
            let points: Vec<&[f64]> = picked.iter().map(|i| rows[i]).collect();
            build_tree(&points, rng)
        })
        .collect();
    Ok(IsoForest {
        dim: data.dimension(),
        trees,
    })
}

/// Grows one tree over `points` to depth ceil(log2 ψ).
pub fn build_tree(points: &[&[f64]], rng: &mut dyn RngCore) -> ITree {
    let mut nodes = Vec::new();
    grow(points, 0, max_depth(points.len()), rng, &mut nodes);
    ITree {
        psi: points.len(),
        nodes,
    }
}

fn grow(points: &[&[f64]], depth: usize, limit: usize, rng: &mut dyn RngCore, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf { size: points.len() });
    if depth >= limit || points.len() <= 1 {
        return id;
    }
    let dim = points[0].len();
    let ranges: Vec<(usize, f64, f64)> = (0..dim)
        .filter_map(|f| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[f]), hi.max(p[f])));
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return id;
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let split = loop {
        let u: f64 = rng.random();
        let q = lo + u * (hi - lo);
        if q > lo && q < hi {
            break q;
        }
    };
    let (left_pts, right_pts): (Vec<&[f64]>, Vec<&[f64]>) = points.iter().partition(|p| p[feature] < split);
    let left = grow(&left_pts, depth + 1, limit, rng, nodes);
    let right = grow(&right_pts, depth + 1, limit, rng, nodes);
    nodes[id] = Node::Internal {
        feature,
        split,
        left,
        right,
    };
    id
}

impl ITree {
    /// Path length to the leaf reached by `x`, extended by c(leaf size).
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[node] {
                Node::Internal {
                    feature,
                    split,
                    left,
                    right,
                } => {
                    node = if x[feature] < split { left } else { right };
                    depth += 1;
                }
                Node::Leaf { size } => return depth as f64 + c_factor(size),
            }
        }
    }

    /// Normalized path term h/c(ψ); a degenerate ψ ≤ 1 counts as 1.
    fn normalized(&self, x: &[f64]) -> f64 {
        let c = c_factor(self.psi);
        if c == 0.0 {
            1.0
        } else {
            self.path_length(x) / c
        }
    }
}

impl IsoForest {
    pub fn from_trees(dim: usize, trees: Vec<ITree>) -> Self {
        Self { dim, trees }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn mean_path_length(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// s = 2^(−mean_t h_t(x)/c(ψ_t)), in (0, 1].
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        let mean = self.trees.iter().map(|t| t.normalized(x)).sum::<f64>() / self.trees.len() as f64;
        Ok(2f64.powf(-mean))
    }

    pub fn export(&self) -> ModelParams {
        let mut values = vec![self.dim as f64, self.trees.len() as f64];
        let mut samples = 0u64;
        for t in &self.trees {
            samples += t.psi as u64;
            encode_tree(t, &mut values);
        }
        ModelParams::new(DetectorKind::IsolationForest, values, samples)
    }

    pub fn import(params: &ModelParams) -> Result<Self> {
        let v = &params.values;
        let bad = |what: &str| Error::SchemaMismatch(format!("isolation forest parameters: {what}"));
        let int = |x: f64| -> Result<usize> {
            if x >= 0.0 && x.fract() == 0.0 && x.is_finite() {
                Ok(x as usize)
            } else {
                Err(bad("expected a non-negative integer"))
            }
        };
        if v.len() < 2 {
            return Err(bad("missing header"));
        }
        let dim = int(v[0])?;
        let count = int(v[1])?;
        let mut pos = 2;
        let mut trees = Vec::with_capacity(count);
        for _ in 0..count {
            if pos + 2 > v.len() {
                return Err(bad("truncated tree header"));
            }
            let psi = int(v[pos])?;
            let n = int(v[pos + 1])?;
            pos += 2;
            if pos + 4 * n > v.len() || n == 0 {
                return Err(bad("truncated nodes"));
            }
            let mut nodes = Vec::with_capacity(n);
            for chunk in v[pos..pos + 4 * n].chunks_exact(4) {
                if chunk[0] < 0.0 {
                    nodes.push(Node::Leaf { size: int(chunk[1])? });
                } else {
                    let (feature, left, right) = (int(chunk[0])?, int(chunk[2])?, int(chunk[3])?);
                    if feature >= dim || left >= n || right >= n {
                        return Err(bad("node index out of range"));
                    }
                    nodes.push(Node::Internal {
                        feature,
                        split: chunk[1],
                        left,
                        right,
                    });
                }
            }
            pos += 4 * n;
            trees.push(ITree { psi, nodes });
        }
        if pos != v.len() || trees.is_empty() {
            return Err(bad("length does not match tree count"));
        }
        Ok(Self { dim, trees })
    }
}

fn encode_tree(t: &ITree, out: &mut Vec<f64>) {
    out.push(t.psi as f64);
    out.push(t.nodes.len() as f64);
    for node in &t.nodes {
        match *node {
            Node::Internal {
                feature,
                split,
                left,
                right,
            } => out.extend([feature as f64, split, left as f64, right as f64]),
            Node::Leaf { size } => out.extend([-1.0, size as f64, 0.0, 0.0]),
        }
    }
}
