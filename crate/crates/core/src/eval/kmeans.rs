use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(h: &Matrix, k: usize, rng: &mut rng::Rng) -> Matrix {
    let n = h.rows();
    let mut centroids = Matrix::zeros(k, h.cols());
    centroids.row_mut(0).copy_from_slice(h.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(h.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(h.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(h.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn lloyd(h: &Matrix, mut centroids: Matrix, max_iter: usize, tol: f64) -> KMeansResult {
    let (n, d) = h.shape();
    let k = centroids.rows();
    let mut assignments = vec![0; n];
    for _ in 0..max_iter {
        for (i, a) in assignments.iter_mut().enumerate() {
            *a = nearest(h.row(i), &centroids).0;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            sums.row_mut(a).iter_mut().zip(h.row(i)).for_each(|(s, x)| *s += x);
        }
        let mut next = Matrix::zeros(k, d);
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(h.row(a), centroids.row(assignments[a]));
                        let db = sq_dist(h.row(b), centroids.row(assignments[b]));
                        da.total_cmp(&db)
                    })
                    .unwrap_or(0);
                next.row_mut(c).copy_from_slice(h.row(far));
            } else {
                let inv = 1.0 / counts[c] as f64;
                next.row_mut(c).iter_mut().zip(sums.row(c)).for_each(|(o, s)| *o = s * inv);
            }
        }
        let shift = (0..k).map(|c| sq_dist(next.row(c), centroids.row(c))).fold(0.0, f64::max).sqrt();
        centroids = next;
        if shift < tol {
            break;
        }
    }
    let mut inertia = 0.0;
    for (i, a) in assignments.iter_mut().enumerate() {
        let (c, dist) = nearest(h.row(i), &centroids);
        *a = c;
        inertia += dist;
    }
    KMeansResult {
        assignments,
        centroids,
        inertia,
    }
}

/// k-means++ seeding followed by Lloyd iterations, keeping the lowest-inertia
/// result over `cfg.restarts` independent runs.
pub fn kmeans(h: &Matrix, k: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    if k < 1 {
        return Err(Error::InvalidArgument("kmeans needs k >= 1".into()));
    }
    if k > h.rows() {
        return Err(Error::InvalidArgument(format!("kmeans k = {k} exceeds {} points", h.rows())));
    }
    if !h.is_finite() {
        return Err(Error::Numeric("kmeans input contains non-finite values".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut rng = rng::seeded(rng::derive_index(cfg.seed, r as u64));
        let init = plus_plus_init(h, k, &mut rng);
        let run = lloyd(h, init, cfg.max_iter.max(1), cfg.tol);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
