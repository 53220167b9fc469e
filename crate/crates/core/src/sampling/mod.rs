//! Mini-batch construction: full batch, uniform neighbor sampling and
//! cluster-based subgraph sampling.

mod neighbor;
mod partition;
mod plan;

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use neighbor::node_sampling_plan;
pub use partition::{partition_graph, subgraph_batch, Partition};
pub use plan::{full_batch_plan, BatchPlan, Strategy};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::linalg::SparseMatrix;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    /// Seed nodes per batch for neighbor sampling.
    pub batch_size: usize,
    /// Neighbors drawn per node, one entry per layer (output layer first).
    /// A shorter list is extended by repeating its last entry.
    pub fanouts: Vec<usize>,
    pub num_clusters: usize,
    pub clusters_per_batch: usize,
    /// Normalize induced subgraphs on their own instead of copying values.
    pub renormalize: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Full,
            batch_size: 512,
            fanouts: vec![10, 10],
            num_clusters: 8,
            clusters_per_batch: 2,
            renormalize: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        match self.strategy {
            Strategy::Full => Ok(()),
            Strategy::Node => {
                if self.batch_size == 0 {
                    return Err(Error::Config("sampler.batch_size must be positive".into()));
                }
                if self.fanouts.is_empty() || self.fanouts.len() > num_layers || self.fanouts.contains(&0) {
                    return Err(Error::Config(format!(
                        "sampler.fanouts needs 1 to {num_layers} positive entries, got {:?}",
                        self.fanouts
                    )));
                }
                Ok(())
            }
            Strategy::Subgraph => {
                if self.clusters_per_batch == 0 || self.clusters_per_batch > self.num_clusters {
                    return Err(Error::Config(format!(
                        "need num_clusters >= clusters_per_batch >= 1, got {} and {}",
                        self.num_clusters, self.clusters_per_batch
                    )));
                }
                Ok(())
            }
        }
    }
}

impl SamplerConfig {
    /// Fanouts for a `num_layers`-deep plan.
    pub fn fanouts_for(&self, num_layers: usize) -> Vec<usize> {
        let last = self.fanouts.last().copied().unwrap_or(1);
        (0..num_layers).map(|l| self.fanouts.get(l).copied().unwrap_or(last)).collect()
    }
}

/// Yields the batches of each training epoch for one strategy.
pub struct Batcher {
    cfg: SamplerConfig,
    graph: Arc<SparseGraph>,
    adj: Arc<SparseMatrix>,
    num_layers: usize,
    partition: Option<Partition>,
    seed: u64,
}

impl Batcher {
    pub fn new(
        cfg: SamplerConfig,
        graph: Arc<SparseGraph>,
        adj: Arc<SparseMatrix>,
        num_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate(num_layers)?;
        let partition = match cfg.strategy {
            Strategy::Subgraph => {
                if cfg.num_clusters > graph.num_nodes() {
                    return Err(Error::Config(format!(
                        "sampler.num_clusters {} exceeds {} nodes",
                        cfg.num_clusters,
                        graph.num_nodes()
                    )));
                }
                Some(partition_graph(&graph, cfg.num_clusters, rng::derive(seed, "partition"))?)
            }
            _ => None,
        };
        Ok(Self {
            cfg,
            graph,
            adj,
            num_layers,
            partition,
            seed,
        })
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn strategy(&self) -> Strategy {
        self.cfg.strategy
    }

    /// All batches for `epoch`. Over one epoch every node is an output node
    /// of exactly one batch.
    pub fn epoch(&self, epoch: u64) -> Result<Vec<BatchPlan>> {
        let seed = rng::derive_index(rng::derive(self.seed, "epoch"), epoch);
        let mut rng = rng::seeded(seed);
        match self.cfg.strategy {
            Strategy::Full => Ok(vec![full_batch_plan(&self.graph, &self.adj, self.num_layers)?]),
            Strategy::Node => {
                let fanouts = self.cfg.fanouts_for(self.num_layers);
                let mut order: Vec<usize> = (0..self.graph.num_nodes()).collect();
                order.shuffle(&mut rng);
                balanced_chunks(&order, self.cfg.batch_size)
                    .enumerate()
                    .map(|(i, seeds)| {
                        node_sampling_plan(&self.graph, &self.adj, seeds, &fanouts, rng::derive_index(seed, i as u64))
                    })
                    .collect()
            }
            Strategy::Subgraph => {
                let part = self.partition.as_ref().expect("partition built for subgraph strategy");
                let mut clusters: Vec<usize> = (0..part.num_clusters).collect();
                clusters.shuffle(&mut rng);
                clusters
                    .chunks(self.cfg.clusters_per_batch)
                    .map(|ids| subgraph_batch(&self.graph, &self.adj, part, ids, self.num_layers, self.cfg.renormalize))
                    .collect()
            }
        }
    }
}

/// Split `items` into `ceil(len / max_size)` consecutive chunks whose sizes
/// differ by at most one.
pub fn balanced_chunks<T>(items: &[T], max_size: usize) -> impl Iterator<Item = &[T]> {
    let n = items.len();
    let k = n.div_ceil(max_size.max(1));
    let (base, extra) = if k == 0 { (0, 0) } else { (n / k, n % k) };
    let mut start = 0;
    (0..k).map(move |i| {
        let len = base + usize::from(i < extra);
        let chunk = &items[start..start + len];
        start += len;
        chunk
    })
}
