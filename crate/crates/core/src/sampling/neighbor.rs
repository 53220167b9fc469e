use std::sync::Arc;

use rand::seq::index::sample;

use super::plan::{BatchPlan, LocalIndex, Strategy};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::linalg::SparseMatrix;
use crate::rng;

/// Uniform neighbor sampling. Starting from `seeds`, each node of layer `l`
/// draws `min(fanouts[l], deg)` distinct neighbors without replacement;
/// layer `l + 1` is layer `l` followed by the newly reached nodes in order
/// of first appearance.
pub fn node_sampling_plan(
    g: &SparseGraph,
    adj: &SparseMatrix,
    seeds: &[usize],
    fanouts: &[usize],
    seed: u64,
) -> Result<BatchPlan> {
    let n = g.num_nodes();
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("node sampling needs at least one seed node".into()));
    }
    if fanouts.is_empty() || fanouts.contains(&0) {
        return Err(Error::InvalidArgument(format!("fanouts must be non-empty and positive, got {fanouts:?}")));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidArgument(format!("seed node {bad} out of range for {n} nodes")));
    }
    let mut local = LocalIndex::new(n);
    let mut b0 = Vec::with_capacity(seeds.len());
    for &s in seeds {
        if local.get(s).is_none() {
            local.assign(&[s]);
            b0.push(s);
        }
    }
    local.clear(&b0);

    let mut layer_nodes = vec![Arc::new(b0)];
    let mut blocks = Vec::with_capacity(fanouts.len());
    let mut picked = Vec::new();
    for (l, &q) in fanouts.iter().enumerate() {
        let mut rng = rng::seeded(rng::derive_index(seed, l as u64));
        let out = Arc::clone(layer_nodes.last().unwrap());
        let mut next: Vec<usize> = out.to_vec();
        let mut member = LocalIndex::new(n);
        member.assign(&next);
        let mut sampled: Vec<Vec<usize>> = Vec::with_capacity(out.len());
        for &v in out.iter() {
            let nbrs = g.neighbors(v);
            picked.clear();
            if nbrs.len() <= q {
                picked.extend_from_slice(nbrs);
            } else {
                picked.extend(sample(&mut rng, nbrs.len(), q).into_iter().map(|i| nbrs[i]));
            }
            for &u in &picked {
                if member.get(u).is_none() {
                    member.set(u, next.len());
                    next.push(u);
                }
            }
            let mut row = picked.clone();
            row.push(v);
            row.sort_unstable();
            sampled.push(row);
        }
        let mut rows = Vec::with_capacity(out.len());
        for (&v, row) in out.iter().zip(&sampled) {
            let mut entries = Vec::with_capacity(row.len());
            for &u in row {
                let w = adj
                    .get(v, u)
                    .ok_or_else(|| Error::Graph(format!("normalized adjacency lacks entry ({v}, {u})")))?;
                entries.push((member.get(u).expect("sampled node is in the next layer"), w));
            }
            rows.push(entries);
        }
        let block = SparseMatrix::from_rows(next.len(), rows)?;
        blocks.push(Arc::new(block));
        layer_nodes.push(Arc::new(next));
    }
    Ok(BatchPlan {
        layer_nodes,
        blocks,
        strategy: Strategy::Node,
    })
}
