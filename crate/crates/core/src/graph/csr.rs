use crate::error::{Error, Result};

/// Immutable undirected graph in CSR form. Every undirected edge `{u, v}` is
/// stored twice, once in each endpoint's row; rows are sorted and free of
/// duplicates and self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    num_edges: usize,
}

impl SparseGraph {
    /// Build a symmetric, deduplicated, self-loop-free CSR from an edge list.
    /// Both `(u, v)` and `(v, u)` describe the same undirected edge.
    pub fn from_edges(edges: &[(usize, usize)], num_nodes: usize) -> Result<Self> {
        let mut degree = vec![0usize; num_nodes];
        for (i, &(u, v)) in edges.iter().enumerate() {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Graph(format!(
                    "edge {i} ({u}, {v}) has an endpoint outside [0, {num_nodes})"
                )));
            }
            if u != v {
                degree[u] += 1;
                degree[v] += 1;
            }
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        row_offsets.push(0);
        for d in &degree {
            row_offsets.push(row_offsets.last().unwrap() + d);
        }
        let mut fill = row_offsets[..num_nodes].to_vec();
        let mut cols = vec![0usize; *row_offsets.last().unwrap()];
        for &(u, v) in edges {
            if u != v {
                cols[fill[u]] = v;
                fill[u] += 1;
                cols[fill[v]] = u;
                fill[v] += 1;
            }
        }
        // Sort and dedup each row, compacting in place.
        let mut col_indices = Vec::with_capacity(cols.len());
        let mut compact_offsets = Vec::with_capacity(num_nodes + 1);
        compact_offsets.push(0);
        for r in 0..num_nodes {
            let row = &mut cols[row_offsets[r]..row_offsets[r + 1]];
            row.sort_unstable();
            let mut prev = None;
            for &c in row.iter() {
                if prev != Some(c) {
                    col_indices.push(c);
                    prev = Some(c);
                }
            }
            compact_offsets.push(col_indices.len());
        }
        let num_edges = col_indices.len() / 2;
        Ok(Self {
            num_nodes,
            row_offsets: compact_offsets,
            col_indices,
            num_edges,
        })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            row_offsets: vec![0; num_nodes + 1],
            col_indices: Vec::new(),
            num_edges: 0,
        }
    }

    /// Wrap raw CSR arrays after checking every structural invariant.
    pub fn from_csr(num_nodes: usize, row_offsets: Vec<usize>, col_indices: Vec<usize>) -> Result<Self> {
        let g = Self {
            num_nodes,
            num_edges: col_indices.len() / 2,
            row_offsets,
            col_indices,
        };
        g.validate()?;
        Ok(g)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges().collect()
    }

    /// Check the CSR invariants: monotone offsets, index bounds, sorted
    /// duplicate-free rows, no self-loops, and symmetry.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.row_offsets.len() != n + 1 || self.row_offsets[0] != 0 {
            return Err(Error::Graph("row_offsets must have length N+1 and start at 0".into()));
        }
        if self.row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Graph("row_offsets must be non-decreasing".into()));
        }
        if self.row_offsets[n] != self.col_indices.len() {
            return Err(Error::Graph("row_offsets[N] must equal len(col_indices)".into()));
        }
        if self.col_indices.len() % 2 != 0 || self.num_edges * 2 != self.col_indices.len() {
            return Err(Error::Graph("stored entries must be twice the edge count".into()));
        }
        for u in 0..n {
            let row = self.neighbors(u);
            if row.iter().any(|&v| v >= n) {
                return Err(Error::Graph(format!("row {u} has an index out of range")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Graph(format!("row {u} is unsorted or has duplicates")));
            }
            if row.binary_search(&u).is_ok() {
                return Err(Error::Graph(format!("row {u} has a self-loop")));
            }
            if let Some(&v) = row.iter().find(|&&v| !self.has_edge(v, u)) {
                return Err(Error::Graph(format!("edge ({u}, {v}) has no reverse entry")));
            }
        }
        Ok(())
    }

    /// Graph on the same node set keeping only edges for which `keep` holds.
    pub fn filter_edges(&self, mut keep: impl FnMut(usize, usize) -> bool) -> SparseGraph {
        let kept: Vec<_> = self.edges().filter(|&(u, v)| keep(u, v)).collect();
        SparseGraph::from_edges(&kept, self.num_nodes).expect("filtered edges stay in range")
    }

    /// Relabel nodes: node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<SparseGraph> {
        if perm.len() != self.num_nodes {
            return Err(Error::InvalidArgument("permutation length must equal N".into()));
        }
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        SparseGraph::from_edges(&edges, self.num_nodes)
    }
}
