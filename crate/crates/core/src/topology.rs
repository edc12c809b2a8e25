//! Cluster formation over smart factories and IIoT devices, and cluster-head election.
//!
//! Node ids are dense: factories occupy `0..factories`, devices follow.

use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detectors::sq_dist;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    SmartFactory,
    Device,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Resources {
    pub energy: f64,
    pub memory: f64,
    pub compute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLoc {
    pub id: u32,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    pub resources: Resources,
    /// Factory a device is attached to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<u32>,
}

impl NodeLoc {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub factories: usize,
    pub devices: usize,
    pub clusters: usize,
    pub side: f64,
    pub device_sigma: f64,
    /// Extra nearest-head links per head on top of the spanning tree.
    pub head_neighbors: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            factories: 256,
            devices: 5000,
            clusters: 50,
            side: 1000.0,
            device_sigma: 20.0,
            head_neighbors: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTopology {
    pub nodes: Vec<NodeLoc>,
    pub factories: usize,
    /// Factory ids per cluster, ascending; clusters ordered by smallest member.
    pub clusters: Vec<Vec<u32>>,
    pub heads: Vec<u32>,
    /// Member-to-head links inside each cluster.
    pub intra_links: Vec<(u32, u32)>,
    /// Head-to-head links.
    pub inter_links: Vec<(u32, u32)>,
}

/// Distance between two factories:
/// sqrt(Σ_dim (ΔS)²·(ΔD)²) with S the factory coordinates and D the
/// centroid of its attached devices.
pub fn df_distance(s_i: &[f64], d_i: &[f64], s_j: &[f64], d_j: &[f64]) -> f64 {
    s_i.iter()
        .zip(s_j)
        .zip(d_i.iter().zip(d_j))
        .map(|((a, b), (c, d))| (b - a) * (b - a) * (d - c) * (d - c))
        .sum::<f64>()
        .sqrt()
}

/// Factories uniform on the square, devices Gaussian around a uniformly chosen factory.
pub fn generate_nodes(cfg: &TopologyConfig, rng: &mut dyn RngCore) -> Result<Vec<NodeLoc>> {
    if cfg.factories == 0 || !(cfg.side > 0.0) || !(cfg.device_sigma >= 0.0) {
        return Err(Error::ConfigInvalid("topology needs factories >= 1 and a positive side".into()));
    }
    let mut nodes = Vec::with_capacity(cfg.factories + cfg.devices);
    for id in 0..cfg.factories {
        nodes.push(NodeLoc {
            id: id as u32,
            kind: NodeKind::SmartFactory,
            x: rng.random_range(0.0..cfg.side),
            y: rng.random_range(0.0..cfg.side),
            resources: Resources {
                energy: rng.random_range(0.0..1.0),
                memory: rng.random_range(0.0..1.0),
                compute: rng.random_range(0.0..1.0),
            },
            parent: None,
        });
    }
    let jitter = Normal::new(0.0, cfg.device_sigma).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    for k in 0..cfg.devices {
        let home = rng.random_range(0..cfg.factories);
        let (hx, hy) = (nodes[home].x, nodes[home].y);
        nodes.push(NodeLoc {
            id: (cfg.factories + k) as u32,
            kind: NodeKind::Device,
            x: hx + jitter.sample(rng),
            y: hy + jitter.sample(rng),
            resources: Resources {
                energy: rng.random_range(0.0..0.1),
                memory: rng.random_range(0.0..0.1),
                compute: rng.random_range(0.0..0.1),
            },
            parent: None,
        });
    }
    Ok(nodes)
}

/// Attaches every device to its nearest factory (lowest id on ties).
pub fn attach_devices(nodes: &mut [NodeLoc]) {
    let factories: Vec<[f64; 2]> = nodes
        .iter()
        .filter(|n| n.kind == NodeKind::SmartFactory)
        .map(NodeLoc::position)
        .collect();
    for n in nodes.iter_mut().filter(|n| n.kind == NodeKind::Device) {
        let p = n.position();
        let mut best = (0usize, f64::INFINITY);
        for (i, f) in factories.iter().enumerate() {
            let d = sq_dist(f, &p);
            if d < best.1 {
                best = (i, d);
            }
        }
        n.parent = Some(best.0 as u32);
    }
}

/// Centroid of each factory's attached devices; a factory with none uses its own position.
fn device_centroids(nodes: &[NodeLoc], factories: usize) -> Vec<[f64; 2]> {
    let mut sum = vec![[0.0; 2]; factories];
    let mut count = vec![0usize; factories];
    for n in nodes.iter().filter(|n| n.kind == NodeKind::Device) {
        if let Some(p) = n.parent {
            sum[p as usize][0] += n.x;
            sum[p as usize][1] += n.y;
            count[p as usize] += 1;
        }
    }
    (0..factories)
        .map(|f| {
            if count[f] == 0 {
                nodes[f].position()
            } else {
                [sum[f][0] / count[f] as f64, sum[f][1] / count[f] as f64]
            }
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage merge order over factories as (distance, i, j) edges,
/// ties broken by the lowest id pair.
fn merge_edges(s: &[[f64; 2]], d: &[[f64; 2]]) -> Vec<(f64, usize, usize)> {
    let f = s.len();
    let mut edges = Vec::with_capacity(f * f.saturating_sub(1) / 2);
    for i in 0..f {
        for j in i + 1..f {
            edges.push((df_distance(&s[i], &d[i], &s[j], &d[j]), i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    edges
}

/// Partitions factories into `k` groups by agglomerative single linkage on Df.
pub fn partition_factories(s: &[[f64; 2]], d: &[[f64; 2]], k: usize) -> Result<Vec<Vec<u32>>> {
    let f = s.len();
    if k == 0 || f < k {
        return Err(Error::TooFewFactories { factories: f, k });
    }
    let mut parent: Vec<usize> = (0..f).collect();
    let mut groups = f;
    for (_, i, j) in merge_edges(s, d) {
        if groups == k {
            break;
        }
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
            groups -= 1;
        }
    }
    let mut by_root: Vec<Vec<u32>> = vec![Vec::new(); f];
    for i in 0..f {
        let r = find(&mut parent, i);
        by_root[r].push(i as u32);
    }
    let mut clusters: Vec<Vec<u32>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
    clusters.sort_by_key(|c| c[0]);
    Ok(clusters)
}

/// argmax of 0.5·energy + 0.3·compute + 0.2·memory, each divided by its
/// maximum inside the cluster; ties go to the lowest id.
pub fn elect_cluster_head(cluster: &[u32], nodes: &[NodeLoc]) -> Result<u32> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let res = |id: u32| nodes[id as usize].resources;
    let max = cluster.iter().fold(Resources::default(), |m, &id| {
        let r = res(id);
        Resources {
            energy: m.energy.max(r.energy),
            memory: m.memory.max(r.memory),
            compute: m.compute.max(r.compute),
        }
    });
    let norm = |v: f64, m: f64| if m > 0.0 { v / m } else { 0.0 };
    let mut ids = cluster.to_vec();
    ids.sort_unstable();
    let mut best = (ids[0], f64::NEG_INFINITY);
    for id in ids {
        let r = res(id);
        let score = 0.5 * norm(r.energy, max.energy) + 0.3 * norm(r.compute, max.compute) + 0.2 * norm(r.memory, max.memory);
        if score > best.1 {
            best = (id, score);
        }
    }
    Ok(best.0)
}

/// Minimum spanning tree over head positions plus links to each head's
/// `extra` nearest other heads. Pairs are (low, high), sorted, unique.
pub fn head_links(heads: &[u32], nodes: &[NodeLoc], extra: usize) -> Vec<(u32, u32)> {
    let h = heads.len();
    let pos = |i: usize| nodes[heads[i] as usize].position();
    let mut links = Vec::new();
    // Prim's algorithm
    let mut in_tree = vec![false; h];
    let mut best = vec![(f64::INFINITY, usize::MAX); h];
    if h > 0 {
        best[0] = (0.0, usize::MAX);
    }
    for _ in 0..h {
        let mut u = usize::MAX;
        for v in 0..h {
            if !in_tree[v] && (u == usize::MAX || best[v].0 < best[u].0) {
                u = v;
            }
        }
        in_tree[u] = true;
        if best[u].1 != usize::MAX {
            links.push((heads[u], heads[best[u].1]));
        }
        for v in 0..h {
            let d = sq_dist(&pos(u), &pos(v));
            if !in_tree[v] && d < best[v].0 {
                best[v] = (d, u);
            }
        }
    }
    for i in 0..h {
        let mut others: Vec<(f64, usize)> = (0..h).filter(|&j| j != i).map(|j| (sq_dist(&pos(i), &pos(j)), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(extra) {
            links.push((heads[i], heads[j]));
        }
    }
    let mut links: Vec<(u32, u32)> = links.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
    links.sort_unstable();
    links.dedup();
    links
}

/// Attaches devices, merges factories into `k` clusters and wires heads.
pub fn form_clusters(mut nodes: Vec<NodeLoc>, k: usize, head_neighbors: usize) -> Result<ClusterTopology> {
    let factories = nodes.iter().take_while(|n| n.kind == NodeKind::SmartFactory).count();
    if nodes[factories..].iter().any(|n| n.kind != NodeKind::Device) {
        return Err(Error::ConfigInvalid("factories must precede devices".into()));
    }
    if nodes.iter().enumerate().any(|(i, n)| n.id as usize != i) {
        return Err(Error::ConfigInvalid("node ids must be dense and ordered".into()));
    }
    attach_devices(&mut nodes);
    let s: Vec<[f64; 2]> = nodes[..factories].iter().map(NodeLoc::position).collect();
    let d = device_centroids(&nodes, factories);
    let clusters = partition_factories(&s, &d, k)?;
    let heads = clusters
        .iter()
        .map(|c| elect_cluster_head(c, &nodes))
        .collect::<Result<Vec<_>>>()?;
    let mut intra_links = Vec::new();
    for (c, &h) in clusters.iter().zip(&heads) {
        for &m in c.iter().filter(|&&m| m != h) {
            intra_links.push((m.min(h), m.max(h)));
        }
    }
    intra_links.sort_unstable();
    let inter_links = head_links(&heads, &nodes, head_neighbors);
    Ok(ClusterTopology {
        nodes,
        factories,
        clusters,
        heads,
        intra_links,
        inter_links,
    })
}

/// Generates nodes and clusters them in one go.
pub fn build_topology(cfg: &TopologyConfig, rng: &mut dyn RngCore) -> Result<ClusterTopology> {
    if cfg.clusters == 0 || cfg.factories < cfg.clusters {
        return Err(Error::TooFewFactories {
            factories: cfg.factories,
            k: cfg.clusters,
        });
    }
    let nodes = generate_nodes(cfg, rng)?;
    form_clusters(nodes, cfg.clusters, cfg.head_neighbors)
}

impl ClusterTopology {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Cluster index of every factory.
    pub fn cluster_of(&self) -> Vec<usize> {
        let mut of = vec![usize::MAX; self.factories];
        for (c, members) in self.clusters.iter().enumerate() {
            for &m in members {
                of[m as usize] = c;
            }
        }
        of
    }

    /// Number of devices attached to each cluster.
    pub fn devices_per_cluster(&self) -> Vec<usize> {
        let of = self.cluster_of();
        let mut counts = vec![0; self.clusters.len()];
        for n in self.nodes.iter().filter(|n| n.kind == NodeKind::Device) {
            if let Some(p) = n.parent {
                counts[of[p as usize]] += 1;
            }
        }
        counts
    }

    /// Factory adjacency from intra- and inter-cluster links.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.factories];
        for &(a, b) in self.intra_links.iter().chain(&self.inter_links) {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.clusters.len() != self.heads.len() {
            return bad("one head per cluster required".into());
        }
        let mut seen = vec![false; self.factories];
        for (c, members) in self.clusters.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyCluster);
            }
            if !members.contains(&self.heads[c]) {
                return bad(format!("head {} is not in cluster {c}", self.heads[c]));
            }
            for &m in members {
                if m as usize >= self.factories || seen[m as usize] {
                    return bad(format!("factory {m} is missing or assigned twice"));
                }
                seen[m as usize] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("some factory belongs to no cluster".into());
        }
        // head graph connectivity
        let mut reached = vec![false; self.factories];
        let adj = self.adjacency();
        let mut stack = vec![self.heads[0] as usize];
        reached[self.heads[0] as usize] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !reached[v as usize] {
                    reached[v as usize] = true;
                    stack.push(v as usize);
                }
            }
        }
        if reached.iter().any(|r| !r) {
            return bad("cluster graph is not connected".into());
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let t: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        t.validate()?;
        Ok(t)
    }
}
