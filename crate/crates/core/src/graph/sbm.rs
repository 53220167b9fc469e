use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, SparseGraph};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Stochastic block model with block-centroid node features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub feat_noise: f64,
    pub seed: u64,
}

/// Draw an SBM graph. Features are `e_block + N(0, feat_noise^2)` per
/// coordinate; labels are block ids.
pub fn sbm_generate(cfg: &SbmConfig) -> Result<DatasetBundle> {
    let SbmConfig {
        blocks,
        nodes_per_block: npb,
        p_in,
        p_out,
        feat_dim,
        feat_noise,
        seed,
    } = *cfg;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if blocks < 2 || npb == 0 {
        return Err(Error::InvalidArgument("need at least two non-empty blocks".into()));
    }
    if feat_dim < blocks {
        return Err(Error::InvalidArgument(format!(
            "feat_dim {feat_dim} cannot hold one-hot centroids for {blocks} blocks"
        )));
    }
    if !(feat_noise >= 0.0 && feat_noise.is_finite()) {
        return Err(Error::InvalidArgument("feat_noise must be finite and >= 0".into()));
    }
    let n = blocks * npb;
    let mut edge_rng = rng::seeded(rng::derive(seed, "sbm-edges"));
    let mut edges = Vec::new();
    for a in 0..blocks {
        for b in a..blocks {
            let p = if a == b { p_in } else { p_out };
            let mut sampler = GeometricSkip::new(p);
            for i in a * npb..(a + 1) * npb {
                let (start, end) = if a == b {
                    (i + 1, (a + 1) * npb)
                } else {
                    (b * npb, (b + 1) * npb)
                };
                sampler.run_segment(&mut edge_rng, start, end, |j| edges.push((i, j)));
            }
        }
    }
    let graph = SparseGraph::from_edges(&edges, n)?;

    let labels: Vec<usize> = (0..n).map(|v| v / npb).collect();
    let mut feat_rng = rng::seeded(rng::derive(seed, "sbm-features"));
    let normal = (feat_noise > 0.0).then(|| Normal::new(0.0, feat_noise).expect("valid sigma"));
    let features = Matrix::from_fn(n, feat_dim, |v, c| {
        let centroid = if c == labels[v] { 1.0 } else { 0.0 };
        centroid + normal.as_ref().map_or(0.0, |d| d.sample(&mut feat_rng))
    });
    DatasetBundle::new(format!("sbm-{blocks}x{npb}"), graph, features, labels, None)
}

/// Bernoulli(p) trials over a sequence of index segments, jumping straight
/// to successes with geometric gaps. The pending gap carries across segments.
struct GeometricSkip {
    p: f64,
    log_q: f64,
    pending: Option<usize>,
}

impl GeometricSkip {
    fn new(p: f64) -> Self {
        Self {
            p,
            log_q: (1.0 - p).ln(),
            pending: None,
        }
    }

    fn gap(&self, rng: &mut rng::Rng) -> usize {
        if self.p >= 1.0 {
            return 0;
        }
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        let g = (u.ln() / self.log_q).floor();
        if g >= usize::MAX as f64 {
            usize::MAX
        } else {
            g as usize
        }
    }

    fn run_segment(&mut self, rng: &mut rng::Rng, start: usize, end: usize, mut emit: impl FnMut(usize)) {
        if self.p <= 0.0 || start >= end {
            return;
        }
        let len = end - start;
        let mut pos = 0usize;
        loop {
            let skip = match self.pending.take() {
                Some(s) => s,
                None => self.gap(rng),
            };
            let remaining = len - pos;
            if skip >= remaining {
                self.pending = Some(skip - remaining);
                return;
            }
            emit(start + pos + skip);
            pos += skip + 1;
            if pos >= len {
                return;
            }
        }
    }
}
