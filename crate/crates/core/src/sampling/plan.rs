use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::linalg::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Full,
    Node,
    Subgraph,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::Node => "node",
            Strategy::Subgraph => "subgraph",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Strategy::Full, Strategy::Node, Strategy::Subgraph]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}; expected one of {{full, node, subgraph}}")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Node sets and restricted adjacency blocks for one mini-batch.
///
/// `layer_nodes[0]` holds the output nodes and `layer_nodes[K]` the input
/// nodes. `blocks[l]` maps `layer_nodes[l + 1]`-indexed inputs onto
/// `layer_nodes[l]`-indexed outputs. Every `layer_nodes[l]` is a prefix of
/// `layer_nodes[l + 1]`, so local row `i` of a block and local column `i`
/// name the same global node.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    pub layer_nodes: Vec<Arc<Vec<usize>>>,
    pub blocks: Vec<Arc<SparseMatrix>>,
    pub strategy: Strategy,
}

impl BatchPlan {
    pub fn num_layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn output_nodes(&self) -> &[usize] {
        &self.layer_nodes[0]
    }

    pub fn input_nodes(&self) -> &[usize] {
        self.layer_nodes.last().expect("plan has at least one node set")
    }

    /// Check structural consistency of the plan.
    pub fn validate(&self) -> Result<()> {
        let k = self.blocks.len();
        if k == 0 || self.layer_nodes.len() != k + 1 {
            return Err(Error::InvalidArgument(format!(
                "plan with {} node sets and {k} blocks",
                self.layer_nodes.len()
            )));
        }
        if self.layer_nodes[0].is_empty() {
            return Err(Error::InvalidArgument("plan has no output nodes".into()));
        }
        for l in 0..k {
            let (out, inp) = (&self.layer_nodes[l], &self.layer_nodes[l + 1]);
            if inp.len() < out.len() || inp[..out.len()] != out[..] {
                return Err(Error::InvalidArgument(format!("layer {l} nodes are not a prefix of layer {}", l + 1)));
            }
            let b = &self.blocks[l];
            if b.rows() != out.len() || b.cols() != inp.len() {
                return Err(Error::shape(
                    "BatchPlan",
                    format!("block {l} is {}x{}, node sets {}x{}", b.rows(), b.cols(), out.len(), inp.len()),
                ));
            }
        }
        Ok(())
    }

    /// Largest deviation between a stored block value and the full
    /// adjacency at the same global position. Missing entries count as
    /// infinite deviation.
    pub fn max_block_deviation(&self, adj: &SparseMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for (l, b) in self.blocks.iter().enumerate() {
            let (out, inp) = (&self.layer_nodes[l], &self.layer_nodes[l + 1]);
            for (r, &gu) in out.iter().enumerate() {
                let (cols, vals) = b.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    let d = adj.get(gu, inp[c]).map_or(f64::INFINITY, |full| (full - v).abs());
                    worst = worst.max(d);
                }
            }
        }
        worst
    }
}

/// Restrict `adj` to rows `out` and columns `inp` (global ids), keeping
/// only positions accepted by `keep(global_row, global_col)`.
pub(crate) fn restrict(
    adj: &SparseMatrix,
    out: &[usize],
    inp: &[usize],
    local: &mut LocalIndex,
    mut keep: impl FnMut(usize, usize) -> bool,
) -> SparseMatrix {
    local.assign(inp);
    let rows: Vec<Vec<(usize, f64)>> = out
        .iter()
        .map(|&u| {
            let (cols, vals) = adj.row(u);
            cols.iter()
                .zip(vals)
                .filter_map(|(&v, &w)| local.get(v).filter(|_| keep(u, v)).map(|c| (c, w)))
                .collect()
        })
        .collect();
    local.clear(inp);
    SparseMatrix::from_rows(inp.len(), rows).expect("restricted columns are in range")
}

/// Reusable global-to-local id map.
pub(crate) struct LocalIndex {
    slots: Vec<usize>,
}

impl LocalIndex {
    pub(crate) fn new(n: usize) -> Self {
        Self { slots: vec![usize::MAX; n] }
    }

    pub(crate) fn assign(&mut self, ids: &[usize]) {
        for (i, &g) in ids.iter().enumerate() {
            self.slots[g] = i;
        }
    }

    #[inline]
    pub(crate) fn set(&mut self, g: usize, i: usize) {
        self.slots[g] = i;
    }

    pub(crate) fn clear(&mut self, ids: &[usize]) {
        for &g in ids {
            self.slots[g] = usize::MAX;
        }
    }

    #[inline]
    pub(crate) fn get(&self, g: usize) -> Option<usize> {
        let s = self.slots[g];
        (s != usize::MAX).then_some(s)
    }
}

/// Every layer uses the whole node set and the full adjacency.
pub fn full_batch_plan(g: &SparseGraph, adj: &Arc<SparseMatrix>, num_layers: usize) -> Result<BatchPlan> {
    if num_layers == 0 {
        return Err(Error::InvalidArgument("plan needs at least one layer".into()));
    }
    if adj.rows() != g.num_nodes() || adj.cols() != g.num_nodes() {
        return Err(Error::shape("full_batch_plan", "adjacency does not match graph"));
    }
    let all = Arc::new((0..g.num_nodes()).collect::<Vec<_>>());
    Ok(BatchPlan {
        layer_nodes: vec![all; num_layers + 1],
        blocks: vec![Arc::clone(adj); num_layers],
        strategy: Strategy::Full,
    })
}
