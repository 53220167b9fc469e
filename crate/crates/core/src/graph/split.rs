use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::SparseGraph;
use crate::error::{Error, Result};
use crate::rng;

/// `floor(rate * n)`, tolerant of representation error in `rate`
/// (`0.29 * 100` must give 29, not 28).
pub fn floor_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64) + 1e-9).floor().max(0.0) as usize
}

/// Disjoint train/val/test node masks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl NodeSplit {
    pub fn from_indices(n: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let mut masks = [vec![false; n], vec![false; n], vec![false; n]];
        let mut seen = vec![false; n];
        for (mask, idx) in masks.iter_mut().zip([train, val, test]) {
            for &i in idx {
                if i >= n {
                    return Err(Error::InvalidArgument(format!("split index {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!("node {i} appears in two splits")));
                }
                seen[i] = true;
                mask[i] = true;
            }
        }
        let [train_mask, val_mask, test_mask] = masks;
        Ok(Self {
            train_mask,
            val_mask,
            test_mask,
        })
    }

    pub fn train_indices(&self) -> Vec<usize> {
        indices(&self.train_mask)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        indices(&self.val_mask)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        indices(&self.test_mask)
    }
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

/// Held-out link-prediction edges. `train` is the message-passing graph used
/// while evaluating; positives across the three parts partition the edge set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub nodes: NodeSplit,
    pub edges: EdgeSplit,
}

/// Ratio split of `n` nodes: sizes are `floor(ratio * n)`, drawn from one
/// seeded permutation.
pub fn split_nodes(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<NodeSplit> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive, got ({tr}, {va}, {te})"
        )));
    }
    if tr + va + te > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios sum to {} > 1",
            tr + va + te
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(seed));
    let (a, b, c) = (floor_count(tr, n), floor_count(va, n), floor_count(te, n));
    NodeSplit::from_indices(n, &perm[..a], &perm[a..a + b], &perm[a + b..a + b + c])
}

/// Hold out `floor(frac * |E|)` edges for validation and test and draw the
/// same number of negatives per split, uniformly from non-edges.
pub fn split_edges_lp(g: &SparseGraph, val_frac: f64, test_frac: f64, seed: u64) -> Result<EdgeSplit> {
    if !(val_frac >= 0.0 && test_frac >= 0.0 && val_frac + test_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge split fractions ({val_frac}, {test_frac}) must be non-negative and sum below 1"
        )));
    }
    let mut edges = g.edge_list();
    let m = edges.len();
    let n_val = floor_count(val_frac, m);
    let n_test = floor_count(test_frac, m);
    let mut rng = rng::seeded(seed);
    edges.shuffle(&mut rng);
    let val_pos = edges[..n_val].to_vec();
    let test_pos = edges[n_val..n_val + n_test].to_vec();
    let mut train = edges[n_val + n_test..].to_vec();
    train.sort_unstable();

    let mut drawn = HashSet::new();
    let val_neg = sample_negatives(g, n_val, &mut drawn, &mut rng)?;
    let test_neg = sample_negatives(g, n_test, &mut drawn, &mut rng)?;
    Ok(EdgeSplit {
        train,
        val_pos,
        val_neg,
        test_pos,
        test_neg,
    })
}

/// Uniform non-edges `(u, v)`, `u < v`, absent from `g` and from `drawn`.
/// Gives up after `100 * needed` rejected draws.
pub fn sample_negatives(
    g: &SparseGraph,
    needed: usize,
    drawn: &mut HashSet<(usize, usize)>,
    rng: &mut rng::Rng,
) -> Result<Vec<(usize, usize)>> {
    let n = g.num_nodes();
    if needed == 0 {
        return Ok(Vec::new());
    }
    let total_pairs = n * n.saturating_sub(1) / 2;
    let available = total_pairs.saturating_sub(g.num_edges() + drawn.len());
    if n < 2 || available < needed {
        return Err(Error::Graph(format!(
            "cannot sample {needed} negative edges: only {available} non-edges remain"
        )));
    }
    let mut out = Vec::with_capacity(needed);
    let mut attempts = 0usize;
    let limit = 100 * needed;
    while out.len() < needed {
        if attempts >= limit {
            return Err(Error::Graph(format!(
                "negative sampling gave up after {limit} attempts ({} of {needed} found)",
                out.len()
            )));
        }
        attempts += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if g.has_edge(pair.0, pair.1) || !drawn.insert(pair) {
            continue;
        }
        out.push(pair);
    }
    Ok(out)
}
