use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::plan::{restrict, BatchPlan, LocalIndex, Strategy};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, SparseGraph};
use crate::linalg::SparseMatrix;
use crate::rng;

/// Disjoint cover of the node set by `num_clusters` non-empty clusters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub num_clusters: usize,
}

impl Partition {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_clusters];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }

    /// Node ids of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.num_clusters];
        for (v, &c) in self.assignment.iter().enumerate() {
            m[c].push(v);
        }
        m
    }

    /// Number of undirected edges whose endpoints lie in different clusters.
    pub fn edge_cut(&self, g: &SparseGraph) -> usize {
        g.edges().filter(|&(u, v)| self.assignment[u] != self.assignment[v]).count()
    }
}

const UNSET: usize = usize::MAX;

/// Seeded BFS-growth partitioner followed by one boundary-refinement pass.
///
/// Seeds are chosen farthest-first (unreachable nodes count as infinitely
/// far). Clusters then grow breadth-first, always extending the currently
/// smallest cluster; a cluster whose frontier is exhausted restarts from the
/// next unassigned node in seed order. Refinement moves boundary nodes to
/// the neighboring cluster holding most of their neighbors when that lowers
/// the cut and keeps every cluster within ±25% of `N / num_clusters`.
pub fn partition_graph(g: &SparseGraph, num_clusters: usize, seed: u64) -> Result<Partition> {
    let n = g.num_nodes();
    if num_clusters == 0 || num_clusters > n {
        return Err(Error::InvalidArgument(format!("cannot split {n} nodes into {num_clusters} clusters")));
    }
    let mut rng = rng::seeded(seed);
    let order = farthest_first(g, num_clusters, rng.random_range(0..n));

    let mut assignment = vec![UNSET; n];
    let mut sizes = vec![0usize; num_clusters];
    let mut frontiers: Vec<VecDeque<usize>> = vec![VecDeque::new(); num_clusters];
    for (c, &s) in order.iter().take(num_clusters).enumerate() {
        assignment[s] = c;
        sizes[c] = 1;
        frontiers[c].push_back(s);
    }
    let mut restart = order.iter().copied().chain(0..n);
    let mut remaining = n - num_clusters;
    while remaining > 0 {
        let c = (0..num_clusters).min_by_key(|&c| (sizes[c], c)).unwrap();
        let mut next = None;
        while let Some(&u) = frontiers[c].front() {
            if let Some(&v) = g.neighbors(u).iter().find(|&&v| assignment[v] == UNSET) {
                next = Some(v);
                break;
            }
            frontiers[c].pop_front();
        }
        let v = match next {
            Some(v) => v,
            None => restart.by_ref().find(|&v| assignment[v] == UNSET).expect("an unassigned node remains"),
        };
        assignment[v] = c;
        sizes[c] += 1;
        frontiers[c].push_back(v);
        remaining -= 1;
    }

    refine(g, &mut assignment, &mut sizes);
    Ok(Partition {
        assignment,
        num_clusters,
    })
}

/// `k` seeds: `first`, then repeatedly the node farthest from all chosen
/// seeds, smallest id on ties. Returns all nodes with seeds first, followed
/// by the rest in id order.
fn farthest_first(g: &SparseGraph, k: usize, first: usize) -> Vec<usize> {
    let n = g.num_nodes();
    let mut dist = vec![usize::MAX; n];
    let mut chosen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut s = first;
    for _ in 0..k {
        chosen[s] = true;
        order.push(s);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in g.neighbors(u) {
                if dist[u] + 1 < dist[v] {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let far = (0..n).filter(|&v| !chosen[v]).max_by_key(|&v| (dist[v], std::cmp::Reverse(v)));
        match far {
            Some(v) => s = v,
            None => break,
        }
    }
    order.extend((0..n).filter(|&v| !chosen[v]));
    order
}

fn refine(g: &SparseGraph, assignment: &mut [usize], sizes: &mut [usize]) {
    let n = assignment.len();
    let k = sizes.len();
    let ideal = n as f64 / k as f64;
    let lo = ((0.75 * ideal).ceil() as usize).max(1);
    let hi = ((1.25 * ideal).floor() as usize).max(sizes.iter().copied().max().unwrap_or(1));
    let mut counts = vec![0usize; k];
    for v in 0..n {
        let own = assignment[v];
        let nbrs = g.neighbors(v);
        if nbrs.iter().all(|&u| assignment[u] == own) {
            continue;
        }
        for &u in nbrs {
            counts[assignment[u]] += 1;
        }
        let best = nbrs
            .iter()
            .map(|&u| assignment[u])
            .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
            .unwrap();
        if best != own && counts[best] > counts[own] && sizes[own] > lo && sizes[best] < hi {
            assignment[v] = best;
            sizes[own] -= 1;
            sizes[best] += 1;
        }
        for &u in nbrs {
            counts[assignment[u]] = 0;
        }
    }
}

/// Plan over the union of the chosen clusters. Every layer uses the same
/// node set and the induced block. By default block values are copied from
/// `adj`; with `renormalize` the induced subgraph is normalized on its own.
pub fn subgraph_batch(
    g: &SparseGraph,
    adj: &SparseMatrix,
    partition: &Partition,
    cluster_ids: &[usize],
    num_layers: usize,
    renormalize: bool,
) -> Result<BatchPlan> {
    if num_layers == 0 {
        return Err(Error::InvalidArgument("plan needs at least one layer".into()));
    }
    if let Some(&bad) = cluster_ids.iter().find(|&&c| c >= partition.num_clusters) {
        return Err(Error::InvalidArgument(format!(
            "cluster {bad} out of range for {} clusters",
            partition.num_clusters
        )));
    }
    let mut chosen = vec![false; partition.num_clusters];
    cluster_ids.iter().for_each(|&c| chosen[c] = true);
    let nodes: Vec<usize> = (0..g.num_nodes()).filter(|&v| chosen[partition.assignment[v]]).collect();
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("chosen clusters contain no nodes".into()));
    }
    let mut local = LocalIndex::new(g.num_nodes());
    let block = if renormalize {
        local.assign(&nodes);
        let edges: Vec<(usize, usize)> = nodes
            .iter()
            .enumerate()
            .flat_map(|(i, &u)| {
                let local = &local;
                g.neighbors(u).iter().filter_map(move |&v| local.get(v).map(|j| (i, j)))
            })
            .collect();
        local.clear(&nodes);
        normalize_adjacency(&SparseGraph::from_edges(&edges, nodes.len())?)
    } else {
        restrict(adj, &nodes, &nodes, &mut local, |_, _| true)
    };
    let nodes = Arc::new(nodes);
    let block = Arc::new(block);
    Ok(BatchPlan {
        layer_nodes: vec![nodes; num_layers + 1],
        blocks: vec![block; num_layers],
        strategy: Strategy::Subgraph,
    })
}
