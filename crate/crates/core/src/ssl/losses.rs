//! The six objective functions, recorded on a [`Tape`] so they can be
//! differentiated with respect to their embedding inputs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor::{Tape, Var};

pub const STANDARDIZE_EPS: f64 = 1e-8;
pub const COSINE_EPS: f64 = 1e-12;

fn same_shape(tape: &Tape, a: Var, b: Var, op: &'static str) -> Result<(usize, usize)> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb {
        return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
    }
    Ok(sa)
}

/// Barlow Twins redundancy reduction:
/// `Σ_i (1 - C_ii)² + (1/l) Σ_{i≠j} C_ij²` with `C = Z̄1ᵀ Z̄2 / N`.
pub fn gbt_loss(tape: &mut Tape, z1: Var, z2: Var) -> Result<Var> {
    let (n, l) = same_shape(tape, z1, z2, "gbt_loss")?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("gbt_loss needs at least 2 rows, got {n}")));
    }
    let a = tape.column_standardize(z1, STANDARDIZE_EPS)?;
    let b = tape.column_standardize(z2, STANDARDIZE_EPS)?;
    let at = tape.transpose(a);
    let c = tape.matmul(at, b)?;
    let c = tape.scale(c, 1.0 / n as f64);
    let d = tape.diag(c)?;
    let neg_d = tape.scale(d, -1.0);
    let one_minus = tape.add_scalar(neg_d, 1.0);
    let on_sq = tape.powi(one_minus, 2);
    let on = tape.sum(on_sq);
    let c_sq = tape.powi(c, 2);
    let all = tape.sum(c_sq);
    let d_sq = tape.powi(d, 2);
    let diag_sq = tape.sum(d_sq);
    let off = tape.sub(all, diag_sq)?;
    let off = tape.scale(off, 1.0 / l as f64);
    tape.add(on, off)
}

/// `(Z - mean) / std / √N` per column.
fn cca_standardize(tape: &mut Tape, z: Var) -> Result<Var> {
    let n = tape.shape(z).0;
    let s = tape.column_standardize(z, STANDARDIZE_EPS)?;
    Ok(tape.scale(s, 1.0 / (n as f64).sqrt()))
}

fn decorrelation(tape: &mut Tape, z: Var) -> Result<Var> {
    let l = tape.shape(z).1;
    let zt = tape.transpose(z);
    let g = tape.matmul(zt, z)?;
    let eye = tape.constant(Matrix::identity(l));
    let diff = tape.sub(g, eye)?;
    let sq = tape.powi(diff, 2);
    Ok(tape.sum(sq))
}

/// `‖Z̃1 - Z̃2‖² + λ (‖Z̃1ᵀZ̃1 - I‖² + ‖Z̃2ᵀZ̃2 - I‖²)`.
pub fn cca_ssg_loss(tape: &mut Tape, z1: Var, z2: Var, lambda: f64) -> Result<Var> {
    let (n, _) = same_shape(tape, z1, z2, "cca_ssg_loss")?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cca_ssg_loss needs at least 2 rows, got {n}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("cca_ssg lambda {lambda} must be non-negative")));
    }
    let a = cca_standardize(tape, z1)?;
    let b = cca_standardize(tape, z2)?;
    let diff = tape.sub(a, b)?;
    let sq = tape.powi(diff, 2);
    let invariance = tape.sum(sq);
    if lambda == 0.0 {
        return Ok(invariance);
    }
    let da = decorrelation(tape, a)?;
    let db = decorrelation(tape, b)?;
    let dec = tape.add(da, db)?;
    let dec = tape.scale(dec, lambda);
    tape.add(invariance, dec)
}

/// Row-wise cosine similarity as `n x 1`.
fn row_cosine(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let an = tape.row_l2_normalize(a, COSINE_EPS);
    let bn = tape.row_l2_normalize(b, COSINE_EPS);
    let prod = tape.mul(an, bn)?;
    Ok(tape.row_sum(prod))
}

/// One direction of the bootstrap loss: `2 - 2 · mean_i cos(p_i, t_i)`.
pub fn bgrl_term(tape: &mut Tape, prediction: Var, target: Var) -> Result<Var> {
    same_shape(tape, prediction, target, "bgrl_loss")?;
    let cos = row_cosine(tape, prediction, target)?;
    let m = tape.mean(cos)?;
    let m = tape.scale(m, -2.0);
    Ok(tape.add_scalar(m, 2.0))
}

/// Symmetric bootstrap loss over two (prediction, target) pairs.
pub fn bgrl_loss(tape: &mut Tape, p1: Var, t2: Var, p2: Var, t1: Var) -> Result<Var> {
    let a = bgrl_term(tape, p1, t2)?;
    let b = bgrl_term(tape, p2, t1)?;
    tape.add(a, b)
}

fn infonce_direction(tape: &mut Tape, u: Var, v: Var, tau: f64) -> Result<Var> {
    let n = tape.shape(u).0;
    let vt = tape.transpose(v);
    let inter = tape.matmul(u, vt)?;
    let inter = tape.scale(inter, 1.0 / tau);
    let ut = tape.transpose(u);
    let intra = tape.matmul(u, ut)?;
    let intra = tape.scale(intra, 1.0 / tau);
    let logits = tape.concat_cols(&[inter, intra])?;
    let mut excluded = vec![false; n * 2 * n];
    (0..n).for_each(|i| excluded[i * 2 * n + n + i] = true);
    let lse = tape.row_logsumexp(logits, Some(Arc::new(excluded)))?;
    let pos = tape.diag(inter)?;
    let per_anchor = tape.sub(lse, pos)?;
    tape.mean(per_anchor)
}

/// Symmetric InfoNCE with inter- and intra-view negatives on row-normalized
/// embeddings, averaged over both directions and all anchors.
pub fn gca_infonce_loss(tape: &mut Tape, u: Var, v: Var, tau: f64) -> Result<Var> {
    same_shape(tape, u, v, "gca_infonce_loss")?;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    let un = tape.row_l2_normalize(u, COSINE_EPS);
    let vn = tape.row_l2_normalize(v, COSINE_EPS);
    let a = infonce_direction(tape, un, vn, tau)?;
    let b = infonce_direction(tape, vn, un, tau)?;
    let s = tape.add(a, b)?;
    Ok(tape.scale(s, 0.5))
}

/// Scaled cosine error: `mean_i (1 - cos(x_i, z_i))^γ`.
pub fn graphmae_loss(tape: &mut Tape, targets: Var, recon: Var, alpha_l: u32) -> Result<Var> {
    let (n, _) = same_shape(tape, targets, recon, "graphmae_loss")?;
    if n == 0 {
        return Err(Error::InvalidArgument("graphmae_loss on an empty mask set".into()));
    }
    if alpha_l < 1 {
        return Err(Error::InvalidArgument("alpha_l must be at least 1".into()));
    }
    let cos = row_cosine(tape, targets, recon)?;
    let neg = tape.scale(cos, -1.0);
    let err = tape.add_scalar(neg, 1.0);
    let err = tape.powi(err, alpha_l as i32);
    tape.mean(err)
}

/// Mean binary cross-entropy over positive (label 1) and negative (label 0)
/// edge logits, both given as `k x 1`.
pub fn s2gae_loss(tape: &mut Tape, pos_logits: Var, neg_logits: Var) -> Result<Var> {
    let (np, nn) = (tape.value(pos_logits).len(), tape.value(neg_logits).len());
    let pt = tape.transpose(pos_logits);
    let ntr = tape.transpose(neg_logits);
    let all = tape.concat_cols(&[pt, ntr])?;
    let targets: Vec<f64> = std::iter::repeat_n(1.0, np).chain(std::iter::repeat_n(0.0, nn)).collect();
    tape.bce_with_logits(all, Arc::new(targets))
}
