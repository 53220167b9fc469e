use super::SparseGraph;
use crate::linalg::SparseMatrix;

/// Symmetric GCN normalization with self-loops:
/// `D̃^{-1/2} (A + I) D̃^{-1/2}` where `D̃` counts the inserted self-loop.
pub fn normalize_adjacency(g: &SparseGraph) -> SparseMatrix {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(g.col_indices().len() + n);
    let mut values = Vec::with_capacity(g.col_indices().len() + n);
    row_offsets.push(0);
    for u in 0..n {
        let mut self_done = false;
        for &v in g.neighbors(u) {
            if !self_done && v > u {
                col_indices.push(u);
                values.push(inv_sqrt[u] * inv_sqrt[u]);
                self_done = true;
            }
            col_indices.push(v);
            values.push(inv_sqrt[u] * inv_sqrt[v]);
        }
        if !self_done {
            col_indices.push(u);
            values.push(inv_sqrt[u] * inv_sqrt[u]);
        }
        row_offsets.push(col_indices.len());
    }
    SparseMatrix::from_csr(n, n, row_offsets, col_indices, values)
        .expect("normalized adjacency is well-formed by construction")
}
