use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SparseMatrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Spmm(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Prelu(Var, Var),
    Elu(Var),
    LeakyRelu(Var, f64),
    Dropout(Var, Vec<f64>),
    RowL2Normalize { x: Var, norms: Vec<f64>, eps: f64 },
    ColumnStandardize { x: Var, inv_std: Vec<f64> },
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    PowI(Var, i32),
    GatherRows(Var, Arc<Vec<usize>>),
    ConcatCols(Vec<Var>),
    RowLogSumExp { x: Var, excluded: Option<Arc<Vec<bool>>> },
    Diag(Var),
    BceWithLogits(Var, Arc<Vec<f64>>),
    SoftmaxCrossEntropy(Var, Arc<Vec<usize>>),
    Gat(Box<GatRecord>),
}

#[derive(Debug)]
struct GatRecord {
    block: Arc<SparseMatrix>,
    z: Var,
    el: Var,
    er: Var,
    slope: f64,
    /// Pre-activation logits per stored entry.
    logits: Vec<f64>,
    /// Softmax weights per stored entry (before dropout).
    alpha: Vec<f64>,
    /// Dropout scale per stored entry, when attention dropout is active.
    drop: Option<Vec<f64>>,
}

impl Op {
    fn aux_elements(&self) -> usize {
        match self {
            Op::Dropout(_, m) => m.len(),
            Op::RowL2Normalize { norms, .. } => norms.len(),
            Op::ColumnStandardize { inv_std, .. } => inv_std.len(),
            Op::Gat(g) => g.logits.len() + g.alpha.len() + g.drop.as_ref().map_or(0, Vec::len),
            _ => 0,
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode autodiff tape over dense 2-D tensors. Ops are recorded in
/// execution order; [`Tape::backward`] walks them in exact reverse order and
/// accumulates gradients additively.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    retained: usize,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `f64` elements held for backward: every non-leaf output
    /// plus the auxiliary buffers (masks, norms, attention weights) ops keep.
    pub fn retained_elements(&self) -> usize {
        self.retained
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        if !matches!(op, Op::Leaf) {
            self.retained += value.len() + op.aux_elements();
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, false)
    }

    /// Leaf whose gradient is collected by [`Tape::backward`].
    pub fn parameter(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, true)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    /// Sparse-dense product with a fixed (non-differentiable) sparse operand.
    pub fn spmm(&mut self, adj: &Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let v = adj.spmm(self.value(x))?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Spmm(Arc::clone(adj), x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// `x + 1 bᵀ`: add a `1 x c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, c) = self.shape(x);
        if self.shape(b) != (1, c) {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", (n, c), self.shape(b))));
        }
        let bias = self.value(b).as_slice().to_vec();
        let mut v = self.value(x).clone();
        for r in 0..n {
            for (o, bv) in v.row_mut(r).iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        let rg = self.rg(&[x, b]);
        Ok(self.push(v, Op::AddRow(x, b), rg))
    }

    /// Multiply row `i` of `x` by `s[i]`, with `s` of shape `n x 1`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (n, _) = self.shape(x);
        if self.shape(s) != (n, 1) {
            return Err(Error::shape("scale_rows", format!("{:?} by {:?}", self.shape(x), self.shape(s))));
        }
        let mut v = self.value(x).clone();
        for r in 0..n {
            let f = self.value(s).get(r, 0);
            v.row_mut(r).iter_mut().for_each(|o| *o *= f);
        }
        let rg = self.rg(&[x, s]);
        Ok(self.push(v, Op::ScaleRows(x, s), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).scale(s);
        let rg = self.rg(&[x]);
        self.push(v, Op::Scale(x, s), rg)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a + s);
        let rg = self.rg(&[x]);
        self.push(v, Op::AddScalar(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.max(0.0));
        let rg = self.rg(&[x]);
        self.push(v, Op::Relu(x), rg)
    }

    /// PReLU with a single learnable slope `a` (shape `1 x 1`).
    pub fn prelu(&mut self, x: Var, a: Var) -> Result<Var> {
        if self.shape(a) != (1, 1) {
            return Err(Error::shape("prelu", "slope must be 1x1"));
        }
        let slope = self.scalar(a);
        let v = self.value(x).map(|t| if t > 0.0 { t } else { slope * t });
        let rg = self.rg(&[x, a]);
        Ok(self.push(v, Op::Prelu(x, a), rg))
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|t| if t > 0.0 { t } else { t.exp_m1() });
        let rg = self.rg(&[x]);
        self.push(v, Op::Elu(x), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.value(x).map(|t| if t > 0.0 { t } else { slope * t });
        let rg = self.rg(&[x]);
        self.push(v, Op::LeakyRelu(x, slope), rg)
    }

    /// Inverted dropout: zero each entry with probability `p` and scale
    /// survivors by `1 / (1 - p)`. The mask is a pure function of `seed`.
    pub fn dropout(&mut self, x: Var, p: f64, seed: u64) -> Result<Var> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout p={p} outside [0, 1]")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let len = self.value(x).len();
        let mask: Vec<f64> = if p >= 1.0 {
            vec![0.0; len]
        } else {
            let keep = 1.0 / (1.0 - p);
            (0..len)
                .map(|i| {
                    if crate::rng::keyed_unit(seed, i as u64, 0x0D) < p {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect()
        };
        let mut v = self.value(x).clone();
        v.as_mut_slice().iter_mut().zip(&mask).for_each(|(o, m)| *o *= m);
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Dropout(x, mask), rg))
    }

    /// `x_i / max(||x_i||, eps)` per row.
    pub fn row_l2_normalize(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (n, _) = xv.shape();
        let norms: Vec<f64> = (0..n)
            .map(|r| xv.row(r).iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect();
        let mut v = xv.clone();
        for (r, &nr) in norms.iter().enumerate() {
            let d = nr.max(eps);
            v.row_mut(r).iter_mut().for_each(|o| *o /= d);
        }
        let rg = self.rg(&[x]);
        self.push(v, Op::RowL2Normalize { x, norms, eps }, rg)
    }

    /// Per-column `(x - mean) / sqrt(var + eps)`, population variance.
    pub fn column_standardize(&mut self, x: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        if n == 0 {
            return Err(Error::shape("column_standardize", "no rows"));
        }
        let mut mean = vec![0.0; c];
        for r in 0..n {
            mean.iter_mut().zip(xv.row(r)).for_each(|(m, a)| *m += a);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; c];
        for r in 0..n {
            for ((s, a), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                *s += (a - m) * (a - m);
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / n as f64 + eps).sqrt()).collect();
        if inv_std.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("column_standardize on a zero-variance column".into()));
        }
        let mut v = xv.clone();
        for r in 0..n {
            for (j, o) in v.row_mut(r).iter_mut().enumerate() {
                *o = (*o - mean[j]) * inv_std[j];
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::ColumnStandardize { x, inv_std }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let v = self.value(x).transpose();
        let rg = self.rg(&[x]);
        self.push(v, Op::Transpose(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(v, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let len = self.value(x).len();
        if len == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let v = Matrix::scalar(self.value(x).sum() / len as f64);
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Mean(x), rg))
    }

    /// `n x c -> n x 1` row sums.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = (0..xv.rows()).map(|r| xv.row(r).iter().sum()).collect();
        let v = Matrix::new(xv.rows(), 1, data).expect("row count matches");
        let rg = self.rg(&[x]);
        self.push(v, Op::RowSum(x), rg)
    }

    pub fn powi(&mut self, x: Var, k: i32) -> Var {
        let v = self.value(x).map(|a| a.powi(k));
        let rg = self.rg(&[x]);
        self.push(v, Op::PowI(x, k), rg)
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let n = self.value(x).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {n}")));
        }
        let v = self.value(x).gather_rows(&idx);
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::GatherRows(x, idx), rg))
    }

    /// First `n` rows.
    pub fn head_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        if n == self.value(x).rows() {
            return Ok(x);
        }
        self.gather_rows(x, Arc::new((0..n).collect()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::hcat(&mats)?;
        let rg = self.rg(parts);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row-wise `log sum exp`, skipping entries flagged in `excluded`
    /// (row-major, same length as `x`). Output is `n x 1`.
    pub fn row_logsumexp(&mut self, x: Var, excluded: Option<Arc<Vec<bool>>>) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        if let Some(m) = &excluded {
            if m.len() != n * c {
                return Err(Error::shape("row_logsumexp", "mask length differs from tensor"));
            }
        }
        let mut out = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let live = |j: usize| excluded.as_ref().is_none_or(|m| !m[r * c + j]);
            let mx = (0..c).filter(|&j| live(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                return Err(Error::Numeric(format!("row_logsumexp: row {r} has no live entries")));
            }
            let s: f64 = (0..c).filter(|&j| live(j)).map(|j| (row[j] - mx).exp()).sum();
            out.push(mx + s.ln());
        }
        let v = Matrix::new(n, 1, out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::RowLogSumExp { x, excluded }, rg))
    }

    /// Diagonal of a square matrix as `n x 1`.
    pub fn diag(&mut self, x: Var) -> Result<Var> {
        let (n, c) = self.shape(x);
        if n != c {
            return Err(Error::shape("diag", format!("{n}x{c} is not square")));
        }
        let data = (0..n).map(|i| self.value(x).get(i, i)).collect();
        let v = Matrix::new(n, 1, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Diag(x), rg))
    }

    /// Mean binary cross-entropy of logits against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<Vec<f64>>) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != targets.len() || z.is_empty() {
            return Err(Error::shape("bce_with_logits", "targets must match non-empty logits"));
        }
        let total: f64 = z
            .as_slice()
            .iter()
            .zip(targets.iter())
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum();
        let v = Matrix::scalar(total / z.len() as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(v, Op::BceWithLogits(logits, targets), rg))
    }

    /// Mean softmax cross-entropy of `n x C` logits against class ids.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Arc<Vec<usize>>) -> Result<Var> {
        let z = self.value(logits);
        let (n, c) = z.shape();
        if labels.len() != n || n == 0 || labels.iter().any(|&y| y >= c) {
            return Err(Error::shape("softmax_cross_entropy", "labels must index the logit columns"));
        }
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = z.row(r);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|a| (a - mx).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let v = Matrix::scalar(total / n as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(v, Op::SoftmaxCrossEntropy(logits, labels), rg))
    }

    /// Graph attention aggregation over a block.
    ///
    /// `z` holds transformed source features (one row per block column),
    /// `el`/`er` are the per-node source/destination attention terms
    /// (`cols x 1`). Output row `i` is `Σ_j α_ij z_j` with
    /// `α_i = softmax_j(leaky_relu(el_j + er_i))` over the stored entries of
    /// block row `i`. Destination `i` is looked up at source row `i`, so the
    /// block's output nodes must be the first rows of its input nodes.
    pub fn gat_aggregate(
        &mut self,
        block: &Arc<SparseMatrix>,
        z: Var,
        el: Var,
        er: Var,
        slope: f64,
        attn_drop: f64,
        seed: u64,
    ) -> Result<Var> {
        let (rows, cols) = (block.rows(), block.cols());
        let (zr, f) = self.shape(z);
        if zr != cols || self.shape(el) != (cols, 1) || self.shape(er) != (cols, 1) || rows > cols {
            return Err(Error::shape(
                "gat_aggregate",
                format!("block {rows}x{cols}, z {:?}, el {:?}, er {:?}", self.shape(z), self.shape(el), self.shape(er)),
            ));
        }
        if !(0.0..=1.0).contains(&attn_drop) {
            return Err(Error::InvalidArgument(format!("attn_drop {attn_drop} outside [0, 1]")));
        }
        let (alpha, logits) = attention_weights(block, self.value(el), self.value(er), slope);
        let drop = (attn_drop > 0.0).then(|| {
            let keep = if attn_drop >= 1.0 { 0.0 } else { 1.0 / (1.0 - attn_drop) };
            (0..alpha.len())
                .map(|i| if crate::rng::keyed_unit(seed, i as u64, 0xA7) < attn_drop { 0.0 } else { keep })
                .collect::<Vec<f64>>()
        });
        let zv = self.value(z);
        let mut out = Matrix::zeros(rows, f);
        for r in 0..rows {
            let (s, e) = (block.row_offsets()[r], block.row_offsets()[r + 1]);
            let out_row = out.row_mut(r);
            for k in s..e {
                let w = alpha[k] * drop.as_ref().map_or(1.0, |d| d[k]);
                if w == 0.0 {
                    continue;
                }
                let src = zv.row(block.col_indices()[k]);
                out_row.iter_mut().zip(src).for_each(|(o, a)| *o += w * a);
            }
        }
        let rg = self.rg(&[z, el, er]);
        let rec = GatRecord {
            block: Arc::clone(block),
            z,
            el,
            er,
            slope,
            logits,
            alpha,
            drop,
        };
        Ok(self.push(out, Op::Gat(Box::new(rec)), rg))
    }

    /// Reverse pass from a scalar loss. Consumes the recorded ops; the tape
    /// is empty afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        let nodes = std::mem::take(&mut self.nodes);
        self.retained = 0;
        let mut grads: Vec<Option<Matrix>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |v: Var| &nodes[v.0].value;
            let needs = |v: Var| nodes[v.0].requires_grad;
            let acc = |v: Var, d: Matrix, grads: &mut Vec<Option<Matrix>>| -> Result<()> {
                if !nodes[v.0].requires_grad {
                    return Ok(());
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&d),
                    slot @ None => {
                        *slot = Some(d);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        acc(*a, g.matmul_nt(val(*b))?, &mut grads)?;
                    }
                    if needs(*b) {
                        acc(*b, val(*a).matmul_tn(&g)?, &mut grads)?;
                    }
                }
                Op::Spmm(adj, x) => {
                    acc(*x, adj.transpose().spmm(&g)?, &mut grads)?;
                }
                Op::Add(a, b) => {
                    if needs(*b) {
                        acc(*b, g.clone(), &mut grads)?;
                    }
                    acc(*a, g, &mut grads)?;
                }
                Op::Sub(a, b) => {
                    if needs(*b) {
                        acc(*b, g.scale(-1.0), &mut grads)?;
                    }
                    acc(*a, g, &mut grads)?;
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        acc(*a, g.zip_map(val(*b), |x, y| x * y)?, &mut grads)?;
                    }
                    if needs(*b) {
                        acc(*b, g.zip_map(val(*a), |x, y| x * y)?, &mut grads)?;
                    }
                }
                Op::AddRow(x, b) => {
                    if needs(*b) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            db.as_mut_slice().iter_mut().zip(g.row(r)).for_each(|(o, a)| *o += a);
                        }
                        acc(*b, db, &mut grads)?;
                    }
                    acc(*x, g, &mut grads)?;
                }
                Op::ScaleRows(x, s) => {
                    let (xv, sv) = (val(*x), val(*s));
                    if needs(*s) {
                        let data = (0..g.rows())
                            .map(|r| crate::linalg::dot(g.row(r), xv.row(r)))
                            .collect();
                        acc(*s, Matrix::new(g.rows(), 1, data)?, &mut grads)?;
                    }
                    if needs(*x) {
                        let mut dx = g;
                        for r in 0..dx.rows() {
                            let f = sv.get(r, 0);
                            dx.row_mut(r).iter_mut().for_each(|o| *o *= f);
                        }
                        acc(*x, dx, &mut grads)?;
                    }
                }
                Op::Scale(x, s) => acc(*x, g.scale(*s), &mut grads)?,
                Op::AddScalar(x) => acc(*x, g, &mut grads)?,
                Op::Relu(x) => {
                    let d = g.zip_map(val(*x), |gv, a| if a > 0.0 { gv } else { 0.0 })?;
                    acc(*x, d, &mut grads)?;
                }
                Op::Prelu(x, a) => {
                    let xv = val(*x);
                    let slope = val(*a).get(0, 0);
                    if needs(*a) {
                        let da: f64 = g
                            .as_slice()
                            .iter()
                            .zip(xv.as_slice())
                            .filter(|(_, &t)| t <= 0.0)
                            .map(|(gv, t)| gv * t)
                            .sum();
                        acc(*a, Matrix::scalar(da), &mut grads)?;
                    }
                    if needs(*x) {
                        let d = g.zip_map(xv, |gv, t| if t > 0.0 { gv } else { slope * gv })?;
                        acc(*x, d, &mut grads)?;
                    }
                }
                Op::Elu(x) => {
                    // y > 0 iff x > 0
                    let d = g.zip_map(&node.value, |gv, y| if y > 0.0 { gv } else { gv * (y + 1.0) })?;
                    acc(*x, d, &mut grads)?;
                }
                Op::LeakyRelu(x, slope) => {
                    let d = g.zip_map(val(*x), |gv, t| if t > 0.0 { gv } else { slope * gv })?;
                    acc(*x, d, &mut grads)?;
                }
                Op::Dropout(x, mask) => {
                    let mut d = g;
                    d.as_mut_slice().iter_mut().zip(mask).for_each(|(o, m)| *o *= m);
                    acc(*x, d, &mut grads)?;
                }
                Op::RowL2Normalize { x, norms, eps } => {
                    let y = &node.value;
                    let mut d = g;
                    for (r, &nr) in norms.iter().enumerate() {
                        if nr > *eps {
                            let proj = crate::linalg::dot(y.row(r), d.row(r));
                            let yr = y.row(r);
                            for (o, yv) in d.row_mut(r).iter_mut().zip(yr) {
                                *o = (*o - yv * proj) / nr;
                            }
                        } else {
                            d.row_mut(r).iter_mut().for_each(|o| *o /= eps);
                        }
                    }
                    acc(*x, d, &mut grads)?;
                }
                Op::ColumnStandardize { x, inv_std } => {
                    let y = &node.value;
                    let (n, c) = y.shape();
                    let mut gsum = vec![0.0; c];
                    let mut gysum = vec![0.0; c];
                    for r in 0..n {
                        for j in 0..c {
                            gsum[j] += g.get(r, j);
                            gysum[j] += g.get(r, j) * y.get(r, j);
                        }
                    }
                    let nf = n as f64;
                    let d = Matrix::from_fn(n, c, |r, j| {
                        inv_std[j] * (g.get(r, j) - gsum[j] / nf - y.get(r, j) * gysum[j] / nf)
                    });
                    acc(*x, d, &mut grads)?;
                }
                Op::Transpose(x) => acc(*x, g.transpose(), &mut grads)?,
                Op::Sum(x) => {
                    let (r, c) = val(*x).shape();
                    acc(*x, Matrix::filled(r, c, g.get(0, 0)), &mut grads)?;
                }
                Op::Mean(x) => {
                    let (r, c) = val(*x).shape();
                    acc(*x, Matrix::filled(r, c, g.get(0, 0) / (r * c) as f64), &mut grads)?;
                }
                Op::RowSum(x) => {
                    let (r, c) = val(*x).shape();
                    acc(*x, Matrix::from_fn(r, c, |i, _| g.get(i, 0)), &mut grads)?;
                }
                Op::PowI(x, k) => {
                    let k = *k;
                    let d = g.zip_map(val(*x), |gv, a| gv * f64::from(k) * a.powi(k - 1))?;
                    acc(*x, d, &mut grads)?;
                }
                Op::GatherRows(x, idx) => {
                    let (r, c) = val(*x).shape();
                    let mut d = Matrix::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        d.row_mut(i).iter_mut().zip(g.row(k)).for_each(|(o, a)| *o += a);
                    }
                    acc(*x, d, &mut grads)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = val(p).shape();
                        if needs(p) {
                            let d = Matrix::from_fn(r, c, |i, j| g.get(i, offset + j));
                            acc(p, d, &mut grads)?;
                        }
                        offset += c;
                    }
                }
                Op::RowLogSumExp { x, excluded } => {
                    let xv = val(*x);
                    let (n, c) = xv.shape();
                    let y = &node.value;
                    let d = Matrix::from_fn(n, c, |r, j| {
                        if excluded.as_ref().is_some_and(|m| m[r * c + j]) {
                            0.0
                        } else {
                            g.get(r, 0) * (xv.get(r, j) - y.get(r, 0)).exp()
                        }
                    });
                    acc(*x, d, &mut grads)?;
                }
                Op::Diag(x) => {
                    let n = val(*x).rows();
                    let mut d = Matrix::zeros(n, n);
                    for i in 0..n {
                        d.set(i, i, g.get(i, 0));
                    }
                    acc(*x, d, &mut grads)?;
                }
                Op::BceWithLogits(z, t) => {
                    let zv = val(*z);
                    let scale = g.get(0, 0) / zv.len() as f64;
                    let data = zv
                        .as_slice()
                        .iter()
                        .zip(t.iter())
                        .map(|(&a, &tv)| (sigmoid(a) - tv) * scale)
                        .collect();
                    acc(*z, Matrix::new(zv.rows(), zv.cols(), data)?, &mut grads)?;
                }
                Op::SoftmaxCrossEntropy(z, labels) => {
                    let zv = val(*z);
                    let (n, c) = zv.shape();
                    let scale = g.get(0, 0) / n as f64;
                    let mut d = Matrix::zeros(n, c);
                    for (r, &y) in labels.iter().enumerate() {
                        let row = zv.row(r);
                        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let s: f64 = row.iter().map(|a| (a - mx).exp()).sum();
                        for (j, o) in d.row_mut(r).iter_mut().enumerate() {
                            let p = (row[j] - mx).exp() / s;
                            *o = (p - if j == y { 1.0 } else { 0.0 }) * scale;
                        }
                    }
                    acc(*z, d, &mut grads)?;
                }
                Op::Gat(rec) => {
                    let (dz, del, der) = gat_backward(rec, val(rec.z), &g);
                    if needs(rec.z) {
                        acc(rec.z, dz, &mut grads)?;
                    }
                    if needs(rec.el) {
                        acc(rec.el, del, &mut grads)?;
                    }
                    if needs(rec.er) {
                        acc(rec.er, der, &mut grads)?;
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax attention weights and their pre-activation logits per stored
/// block entry.
pub(crate) fn attention_weights(block: &SparseMatrix, el: &Matrix, er: &Matrix, slope: f64) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = vec![0.0; block.nnz()];
    let mut logits = vec![0.0; block.nnz()];
    for r in 0..block.rows() {
        let (s, e) = (block.row_offsets()[r], block.row_offsets()[r + 1]);
        if s == e {
            continue;
        }
        let er_r = er.get(r, 0);
        let mut mx = f64::NEG_INFINITY;
        for k in s..e {
            let raw = el.get(block.col_indices()[k], 0) + er_r;
            logits[k] = raw;
            let act = if raw > 0.0 { raw } else { slope * raw };
            alpha[k] = act;
            mx = mx.max(act);
        }
        let mut total = 0.0;
        for a in &mut alpha[s..e] {
            *a = (*a - mx).exp();
            total += *a;
        }
        alpha[s..e].iter_mut().for_each(|a| *a /= total);
    }
    (alpha, logits)
}

fn gat_backward(rec: &GatRecord, z: &Matrix, g: &Matrix) -> (Matrix, Matrix, Matrix) {
    let block = &rec.block;
    let (cols, f) = z.shape();
    let mut dz = Matrix::zeros(cols, f);
    let mut del = Matrix::zeros(cols, 1);
    let mut der = Matrix::zeros(cols, 1);
    for r in 0..block.rows() {
        let (s, e) = (block.row_offsets()[r], block.row_offsets()[r + 1]);
        let gr = g.row(r);
        // d loss / d alpha_k (through the dropout scale)
        let mut dalpha = Vec::with_capacity(e - s);
        for k in s..e {
            let c = block.col_indices()[k];
            let m = rec.drop.as_ref().map_or(1.0, |d| d[k]);
            let w = rec.alpha[k] * m;
            if w != 0.0 {
                dz.row_mut(c).iter_mut().zip(gr).for_each(|(o, a)| *o += w * a);
            }
            dalpha.push(if m == 0.0 { 0.0 } else { m * crate::linalg::dot(gr, z.row(c)) });
        }
        let inner: f64 = (s..e).zip(&dalpha).map(|(k, da)| rec.alpha[k] * da).sum();
        for (k, da) in (s..e).zip(&dalpha) {
            let de = rec.alpha[k] * (da - inner);
            let ds = if rec.logits[k] > 0.0 { de } else { rec.slope * de };
            let c = block.col_indices()[k];
            del.as_mut_slice()[c] += ds;
            der.as_mut_slice()[r] += ds;
        }
    }
    (dz, del, der)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::new(rows.len(), rows[0].len(), rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        Matrix::from_fn(rows, cols, |r, c| 2.0 * crate::rng::keyed_unit(seed, r as u64, c as u64) - 1.0)
    }

    fn assert_grads(f: impl Fn(&mut Tape, &[Var]) -> Result<Var>, inputs: &[Matrix]) {
        let ratio = gradcheck::check(&f, inputs, 1e-4, 1e-4, 1e-6).unwrap();
        assert!(ratio <= 1.0, "finite-difference mismatch ratio {ratio}");
    }

    #[test]
    fn relu_forward() {
        let mut t = Tape::new();
        let x = t.constant(m(&[&[-1.0, 2.0]]));
        let y = t.relu(x);
        assert_eq!(t.value(y), &m(&[&[0.0, 2.0]]));
    }

    #[test]
    fn dropout_extremes() {
        let mut t = Tape::new();
        let x = t.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        assert_eq!(t.dropout(x, 0.0, 7).unwrap(), x);
        let y = t.dropout(x, 1.0, 7).unwrap();
        assert_eq!(t.value(y), &Matrix::zeros(2, 2));
        assert!(t.dropout(x, 1.5, 7).is_err());
    }

    #[test]
    fn dropout_keeps_expectation() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::filled(200, 50, 1.0));
        let y = t.dropout(x, 0.3, 11).unwrap();
        let mean = t.value(y).sum() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn column_standardize_two_rows() {
        let mut t = Tape::new();
        let x = t.constant(m(&[&[1.0], &[3.0]]));
        let y = t.column_standardize(x, 0.0).unwrap();
        assert_eq!(t.value(y), &m(&[&[-1.0], &[1.0]]));
        let c = t.constant(m(&[&[2.0], &[2.0]]));
        assert!(t.column_standardize(c, 0.0).is_err());
    }

    #[test]
    fn square_sum_gradient() {
        let mut t = Tape::new();
        let x = t.parameter(Matrix::scalar(3.0));
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().get(0, 0), 6.0);
        assert!(t.is_empty());
    }

    #[test]
    fn relu_sum_gradient() {
        let mut t = Tape::new();
        let x = t.parameter(m(&[&[-1.0, 2.0]]));
        let y = t.relu(x);
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &m(&[&[0.0, 1.0]]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.parameter(Matrix::zeros(2, 2));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::scalar(2.0));
        let b = t.parameter(Matrix::scalar(5.0));
        let p = t.mul(a, b).unwrap();
        let g = t.backward(p).unwrap();
        assert!(g.get(a).is_none());
        assert_eq!(g.get(b).unwrap().get(0, 0), 2.0);
    }

    #[test]
    fn retained_counts_non_leaf_outputs() {
        let mut t = Tape::new();
        let x = t.parameter(Matrix::zeros(3, 4));
        assert_eq!(t.retained_elements(), 0);
        let y = t.relu(x);
        let _ = t.sum(y);
        assert_eq!(t.retained_elements(), 12 + 1);
    }

    #[test]
    fn gradcheck_dense_ops() {
        let a = random(3, 4, 1);
        let b = random(4, 2, 2);
        let c = random(3, 4, 3);
        assert_grads(
            |t, v| {
                let p = t.matmul(v[0], v[1])?;
                let q = t.powi(p, 2);
                Ok(t.sum(q))
            },
            &[a.clone(), b],
        );
        assert_grads(
            |t, v| {
                let s = t.sub(v[0], v[1])?;
                let p = t.mul(s, v[0])?;
                let q = t.add(p, v[1])?;
                let e = t.elu(q);
                let l = t.leaky_relu(e, 0.2);
                let sc = t.scale(l, 1.7);
                let sh = t.add_scalar(sc, 0.3);
                let w = t.powi(sh, 3);
                t.mean(w)
            },
            &[a.clone(), c.clone()],
        );
        assert_grads(
            |t, v| {
                let tr = t.transpose(v[0]);
                let p = t.matmul(tr, v[1])?;
                let d = t.diag(p)?;
                let r = t.row_sum(v[0]);
                let rs = t.scale_rows(v[1], r)?;
                let s1 = t.sum(d);
                let q = t.powi(rs, 2);
                let s2 = t.sum(q);
                t.add(s1, s2)
            },
            &[a.clone(), c.clone()],
        );
    }

    #[test]
    fn gradcheck_structural_ops() {
        let a = random(3, 4, 4);
        let bias = random(1, 4, 5);
        let slope = Matrix::scalar(0.25);
        assert_grads(
            |t, v| {
                let x = t.add_row(v[0], v[1])?;
                let y = t.prelu(x, v[2])?;
                let g = t.gather_rows(y, Arc::new(vec![2, 0, 2]))?;
                let h = t.head_rows(y, 2)?;
                let cat = t.concat_cols(&[g, v[0]])?;
                let q = t.powi(cat, 2);
                let hq = t.powi(h, 3);
                let s1 = t.sum(q);
                let s2 = t.sum(hq);
                t.add(s1, s2)
            },
            &[a, bias, slope],
        );
    }

    #[test]
    fn gradcheck_normalizers() {
        let a = random(5, 3, 6);
        let w = random(5, 3, 7);
        assert_grads(
            |t, v| {
                let n = t.row_l2_normalize(v[0], 1e-12);
                let p = t.mul(n, v[1])?;
                Ok(t.sum(p))
            },
            &[a.clone(), w.clone()],
        );
        assert_grads(
            |t, v| {
                let n = t.column_standardize(v[0], 1e-9)?;
                let p = t.mul(n, v[1])?;
                Ok(t.sum(p))
            },
            &[a, w],
        );
    }

    #[test]
    fn gradcheck_losses() {
        let z = random(4, 3, 8);
        let mask = Arc::new(vec![
            true, false, false, false, true, false, false, false, true, false, false, false,
        ]);
        assert_grads(
            |t, v| {
                let l = t.row_logsumexp(v[0], Some(Arc::clone(&mask)))?;
                let q = t.powi(l, 2);
                Ok(t.sum(q))
            },
            &[z.clone()],
        );
        let targets = Arc::new((0..12).map(|i| f64::from(i % 2)).collect::<Vec<_>>());
        assert_grads(|t, v| t.bce_with_logits(v[0], Arc::clone(&targets)), &[z.clone()]);
        let labels = Arc::new(vec![0, 2, 1, 2]);
        assert_grads(|t, v| t.softmax_cross_entropy(v[0], Arc::clone(&labels)), &[z]);
    }

    #[test]
    fn gradcheck_spmm_and_attention() {
        let block = Arc::new(
            SparseMatrix::from_rows(
                4,
                vec![
                    vec![(0, 1.0), (1, 1.0), (3, 1.0)],
                    vec![(0, 1.0), (1, 1.0), (2, 1.0)],
                    vec![(2, 1.0), (3, 1.0)],
                ],
            )
            .unwrap(),
        );
        let z = random(4, 3, 9);
        let el = random(4, 1, 10);
        let er = random(4, 1, 11);
        let w = random(3, 3, 12);
        assert_grads(
            |t, v| {
                let y = t.gat_aggregate(&block, v[0], v[1], v[2], 0.2, 0.0, 0)?;
                let p = t.mul(y, v[3])?;
                Ok(t.sum(p))
            },
            &[z.clone(), el.clone(), er.clone(), w.clone()],
        );
        assert_grads(
            |t, v| {
                let y = t.gat_aggregate(&block, v[0], v[1], v[2], 0.2, 0.4, 3)?;
                let p = t.mul(y, v[3])?;
                Ok(t.sum(p))
            },
            &[z.clone(), el, er, w.clone()],
        );
        assert_grads(
            |t, v| {
                let y = t.spmm(&block, v[0])?;
                let p = t.mul(y, v[1])?;
                Ok(t.sum(p))
            },
            &[z, w],
        );
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let block = SparseMatrix::from_rows(3, vec![vec![(0, 1.0), (1, 1.0), (2, 1.0)], vec![(1, 1.0)]]).unwrap();
        let el = random(3, 1, 1);
        let er = random(3, 1, 2);
        let (alpha, _) = attention_weights(&block, &el, &er, 0.2);
        assert!((alpha[..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(alpha[3], 1.0);
    }
}
