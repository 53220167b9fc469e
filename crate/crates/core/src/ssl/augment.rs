use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::split::floor_count;
use crate::graph::SparseGraph;
use crate::linalg::{Matrix, SparseMatrix};
use crate::rng;

/// Upper bound on any single degree-weighted drop probability.
const CENTRALITY_CAP: f64 = 0.7;

/// Edge and feature-column drop probabilities for one augmented view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationSpec {
    pub drop_edge_p: f64,
    pub drop_feat_p: f64,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("drop_edge_p", self.drop_edge_p), ("drop_feat_p", self.drop_feat_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Drop `spec.drop_edge_p` of the undirected edges and zero
/// `spec.drop_feat_p` of the feature columns, both independently per item.
pub fn augment(g: &SparseGraph, x: &Matrix, spec: &AugmentationSpec) -> Result<(SparseGraph, Matrix)> {
    spec.validate()?;
    let edges = EdgeDrop::Uniform(spec.drop_edge_p);
    let feats = FeatureDrop::Uniform(spec.drop_feat_p);
    Ok((
        drop_edges(g, &edges, rng::derive(spec.seed, "edges")),
        drop_features(x, &feats, rng::derive(spec.seed, "features")),
    ))
}

/// Per-edge drop probability rule.
#[derive(Clone, Debug, PartialEq)]
pub enum EdgeDrop {
    Uniform(f64),
    /// Edges between low-degree nodes are dropped more often. The score of
    /// edge `(u, v)` is `s = ln((deg u + deg v) / 2)` and its probability
    /// `min(p (s_max - s) / (s_max - s_mean), 0.7)`.
    Degree { p: f64, s_max: f64, s_mean: f64 },
}

impl EdgeDrop {
    pub fn degree_weighted(g: &SparseGraph, p: f64) -> Self {
        let scores: Vec<f64> = g.edges().map(|(u, v)| edge_score(g, u, v)).collect();
        if scores.is_empty() {
            return EdgeDrop::Uniform(p);
        }
        let s_max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s_mean = scores.iter().sum::<f64>() / scores.len() as f64;
        if s_max - s_mean <= 1e-12 {
            EdgeDrop::Uniform(p)
        } else {
            EdgeDrop::Degree { p, s_max, s_mean }
        }
    }

    pub fn prob(&self, g: &SparseGraph, u: usize, v: usize) -> f64 {
        match *self {
            EdgeDrop::Uniform(p) => p,
            EdgeDrop::Degree { p, s_max, s_mean } => {
                (p * (s_max - edge_score(g, u, v)) / (s_max - s_mean)).clamp(0.0, CENTRALITY_CAP)
            }
        }
    }

    fn is_noop(&self) -> bool {
        matches!(*self, EdgeDrop::Uniform(p) if p == 0.0)
    }
}

fn edge_score(g: &SparseGraph, u: usize, v: usize) -> f64 {
    (((g.degree(u) + g.degree(v)) as f64 / 2.0).max(1.0)).ln()
}

/// Per-column feature drop probability rule.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureDrop {
    Uniform(f64),
    PerColumn(Arc<Vec<f64>>),
}

impl FeatureDrop {
    /// Columns carrying little degree-weighted mass are dropped more often:
    /// `w_j = ln(1 + Σ_u |x_uj| deg u)` and
    /// `p_j = min(p (w_max - w_j) / (w_max - w_mean), 0.7)`.
    pub fn degree_weighted(g: &SparseGraph, x: &Matrix, p: f64) -> Self {
        let mut mass = vec![0.0; x.cols()];
        for u in 0..x.rows() {
            let d = g.degree(u) as f64;
            mass.iter_mut().zip(x.row(u)).for_each(|(m, a)| *m += a.abs() * d);
        }
        let w: Vec<f64> = mass.iter().map(|m| m.ln_1p()).collect();
        let w_max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w_mean = w.iter().sum::<f64>() / w.len().max(1) as f64;
        if w.is_empty() || w_max - w_mean <= 1e-12 {
            return FeatureDrop::Uniform(p);
        }
        FeatureDrop::PerColumn(Arc::new(
            w.iter()
                .map(|wj| (p * (w_max - wj) / (w_max - w_mean)).clamp(0.0, CENTRALITY_CAP))
                .collect(),
        ))
    }

    pub fn prob(&self, col: usize) -> f64 {
        match self {
            FeatureDrop::Uniform(p) => *p,
            FeatureDrop::PerColumn(ps) => ps[col],
        }
    }

    fn is_noop(&self) -> bool {
        matches!(*self, FeatureDrop::Uniform(p) if p == 0.0)
    }
}

fn keep_edge(rule: &EdgeDrop, g: &SparseGraph, seed: u64, u: usize, v: usize) -> bool {
    let (a, b) = (u.min(v), u.max(v));
    rng::keyed_unit(seed, a as u64, b as u64) >= rule.prob(g, a, b)
}

/// Keep each undirected edge with probability `1 - rule.prob(u, v)`. The
/// decision for an edge depends only on `seed` and its endpoints.
pub fn drop_edges(g: &SparseGraph, rule: &EdgeDrop, seed: u64) -> SparseGraph {
    if rule.is_noop() {
        return g.clone();
    }
    g.filter_edges(|u, v| keep_edge(rule, g, seed, u, v))
}

/// Whether column `j` survives in the view keyed by `seed`.
pub fn column_kept(rule: &FeatureDrop, seed: u64, j: usize) -> bool {
    rng::keyed_unit(seed, j as u64, 0x0F) >= rule.prob(j)
}

/// Zero whole feature columns.
pub fn drop_features(x: &Matrix, rule: &FeatureDrop, seed: u64) -> Matrix {
    if rule.is_noop() {
        return x.clone();
    }
    let kept: Vec<bool> = (0..x.cols()).map(|j| column_kept(rule, seed, j)).collect();
    let mut out = x.clone();
    for r in 0..out.rows() {
        out.row_mut(r).iter_mut().zip(&kept).filter(|(_, k)| !**k).for_each(|(o, _)| *o = 0.0);
    }
    out
}

/// Remove stored block entries whose global endpoints fail `keep`.
/// Self-loops (same global node on both sides) are always kept.
pub fn filter_block(
    block: &SparseMatrix,
    row_nodes: &[usize],
    col_nodes: &[usize],
    mut keep: impl FnMut(usize, usize) -> bool,
) -> SparseMatrix {
    let mut offsets = Vec::with_capacity(block.rows() + 1);
    let mut cols = Vec::with_capacity(block.nnz());
    let mut vals = Vec::with_capacity(block.nnz());
    offsets.push(0);
    for r in 0..block.rows() {
        let (cs, vs) = block.row(r);
        for (&c, &v) in cs.iter().zip(vs) {
            let (gu, gv) = (row_nodes[r], col_nodes[c]);
            if gu == gv || keep(gu, gv) {
                cols.push(c);
                vals.push(v);
            }
        }
        offsets.push(cols.len());
    }
    SparseMatrix::from_csr(block.rows(), block.cols(), offsets, cols, vals).expect("subset of a valid block")
}

/// Apply an edge-drop rule to the blocks of a mini-batch with the same
/// per-edge decisions [`drop_edges`] makes on the whole graph.
pub(crate) fn drop_block_edges(
    g: &SparseGraph,
    block: &SparseMatrix,
    row_nodes: &[usize],
    col_nodes: &[usize],
    rule: &EdgeDrop,
    seed: u64,
) -> SparseMatrix {
    filter_block(block, row_nodes, col_nodes, |u, v| keep_edge(rule, g, seed, u, v))
}

/// `floor(rate * n)` distinct indices in `0..n`, at least `min_count`,
/// returned in ascending order.
pub(crate) fn sample_indices(n: usize, rate: f64, min_count: usize, seed: u64) -> Vec<usize> {
    let k = floor_count(rate, n).max(min_count).min(n);
    let mut idx = rand::seq::index::sample(&mut rng::seeded(seed), n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Result of [`mask_nodes`].
#[derive(Clone, Debug, PartialEq)]
pub struct NodeMask {
    pub x_masked: Matrix,
    pub mask_index: Vec<usize>,
    pub targets: Matrix,
}

/// Replace `floor(mask_rate * N)` rows of `x` with `token`.
pub fn mask_nodes(x: &Matrix, token: &[f64], mask_rate: f64, seed: u64) -> Result<NodeMask> {
    if !(0.0..=1.0).contains(&mask_rate) {
        return Err(Error::InvalidArgument(format!("mask_rate {mask_rate} outside [0, 1]")));
    }
    if token.len() != x.cols() {
        return Err(Error::shape("mask_nodes", format!("token width {} vs {} features", token.len(), x.cols())));
    }
    let mask_index = sample_indices(x.rows(), mask_rate, 0, seed);
    let targets = x.gather_rows(&mask_index);
    let mut x_masked = x.clone();
    for &i in &mask_index {
        x_masked.row_mut(i).copy_from_slice(token);
    }
    Ok(NodeMask {
        x_masked,
        mask_index,
        targets,
    })
}

/// Hide `floor(mask_ratio * |E|)` undirected edges. Returns the visible
/// graph and the hidden edges as `(u, v)` with `u < v`.
pub fn mask_edges(g: &SparseGraph, mask_ratio: f64, seed: u64) -> Result<(SparseGraph, Vec<(usize, usize)>)> {
    if !(mask_ratio > 0.0 && mask_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("mask_ratio {mask_ratio} outside (0, 1)")));
    }
    let edges = g.edge_list();
    if edges.is_empty() {
        return Err(Error::Graph("cannot mask edges of a graph without edges".into()));
    }
    let hidden_idx = sample_indices(edges.len(), mask_ratio, 0, seed);
    let mut hidden_flag = vec![false; edges.len()];
    hidden_idx.iter().for_each(|&i| hidden_flag[i] = true);
    let visible: Vec<(usize, usize)> = edges
        .iter()
        .zip(&hidden_flag)
        .filter(|(_, h)| !**h)
        .map(|(e, _)| *e)
        .collect();
    let hidden = hidden_idx.iter().map(|&i| edges[i]).collect();
    Ok((SparseGraph::from_edges(&visible, g.num_nodes())?, hidden))
}
