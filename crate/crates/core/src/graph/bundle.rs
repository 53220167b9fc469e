use serde::{Deserialize, Serialize};

use super::split::{split_edges_lp, split_nodes, NodeSplit, SplitSpec};
use super::SparseGraph;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Ratios used when a dataset ships no public node split, plus the
/// link-prediction hold-out fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub lp_val: f64,
    pub lp_test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.1,
            val: 0.1,
            test: 0.8,
            lp_val: 0.05,
            lp_test: 0.10,
            seed: 0,
        }
    }
}

/// A graph together with node features, labels and (optionally) the public
/// node split shipped with it.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: SparseGraph,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub public_split: Option<NodeSplit>,
}

impl DatasetBundle {
    pub fn new(
        name: impl Into<String>,
        graph: SparseGraph,
        features: Matrix,
        labels: Vec<usize>,
        public_split: Option<NodeSplit>,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n {
            return Err(Error::InvalidArgument(format!(
                "feature matrix has {} rows for {n} nodes",
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument("features contain non-finite values".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        if num_classes < 2 {
            return Err(Error::InvalidArgument("datasets need at least two classes".into()));
        }
        if let Some(s) = &public_split {
            if s.train_mask.len() != n {
                return Err(Error::InvalidArgument("public split length differs from N".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            graph,
            features,
            labels,
            num_classes,
            public_split,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    /// Node split (public when shipped, ratio split otherwise) and the
    /// link-prediction edge split.
    pub fn split(&self, cfg: &SplitConfig) -> Result<SplitSpec> {
        let nodes = match &self.public_split {
            Some(s) => s.clone(),
            None => split_nodes(
                self.num_nodes(),
                (cfg.train, cfg.val, cfg.test),
                crate::rng::derive(cfg.seed, "nodes"),
            )?,
        };
        let edges = split_edges_lp(
            &self.graph,
            cfg.lp_val,
            cfg.lp_test,
            crate::rng::derive(cfg.seed, "edges"),
        )?;
        Ok(SplitSpec { nodes, edges })
    }

    /// `(nodes, edges, feat_dim, classes)`.
    pub fn fingerprint(&self) -> (usize, usize, usize, usize) {
        (
            self.num_nodes(),
            self.graph.num_edges(),
            self.feat_dim(),
            self.num_classes,
        )
    }
}
