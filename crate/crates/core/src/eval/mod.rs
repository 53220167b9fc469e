//! Downstream scoring of frozen embeddings: node classification through an
//! MLP probe, link prediction through an MLP edge decoder and node clustering
//! through k-means, plus the ranking and clustering metrics they report.

mod kmeans;
mod link;
mod metrics;
mod probe;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use link::{eval_link_prediction, LinkDecoderConfig, LinkResult};
pub use metrics::{accuracy, ap, ari, auc, nmi};
pub use probe::{eval_node_classification, ProbeConfig, ProbeResult};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Metric values for one split; a task that was not run leaves its fields empty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
}

/// NMI and ARI of a clustering against labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusteringScores {
    pub nmi: f64,
    pub ari: f64,
}

/// Score `pred` against `labels`, restricted to `subset` when given.
pub fn score_clustering(pred: &[usize], labels: &[usize], subset: Option<&[usize]>) -> Result<ClusteringScores> {
    if pred.len() != labels.len() {
        return Err(Error::shape("score_clustering", format!("{} assignments for {} labels", pred.len(), labels.len())));
    }
    let (p, y): (Vec<usize>, Vec<usize>) = match subset {
        Some(idx) => idx.iter().map(|&i| (pred[i], labels[i])).unzip(),
        None => (pred.to_vec(), labels.to_vec()),
    };
    Ok(ClusteringScores {
        nmi: nmi(&p, &y)?,
        ari: ari(&p, &y)?,
    })
}

/// k-means with one cluster per class, then NMI and ARI against the labels.
pub fn eval_node_clustering(h: &Matrix, labels: &[usize], cfg: &KMeansConfig) -> Result<ClusteringScores> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let fit = kmeans(h, k, cfg)?;
    score_clustering(&fit.assignments, labels, None)
}
