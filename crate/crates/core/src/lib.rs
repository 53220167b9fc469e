//! Benchmark framework for graph self-supervised learning.
//!
//! Pluggable contrastive and generative objectives train GCN/GAT encoders
//! under full-batch, neighbor-sampling or cluster-subgraph batching; frozen
//! embeddings are scored on node classification, link prediction and node
//! clustering.

pub mod encoders;
pub mod eval;
pub mod experiment;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sampling;
pub mod space;
pub mod ssl;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{DatasetBundle, SparseGraph};
pub use linalg::{Matrix, SparseMatrix};
