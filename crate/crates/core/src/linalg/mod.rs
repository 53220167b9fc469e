//! Dense and sparse matrix kernels shared by the graph, autodiff and
//! evaluation layers.

mod dense;
mod sparse;

pub use dense::Matrix;
pub(crate) use dense::dot;
pub use sparse::SparseMatrix;
