//! Graph storage, normalization, dataset bundling, splitting and synthetic
//! generation.

mod bundle;
mod csr;
mod normalize;
mod sbm;
pub mod split;

pub use bundle::{DatasetBundle, SplitConfig};
pub use csr::SparseGraph;
pub use normalize::normalize_adjacency;
pub use sbm::{sbm_generate, SbmConfig};
pub use split::{split_edges_lp, split_nodes, EdgeSplit, NodeSplit, SplitSpec};
