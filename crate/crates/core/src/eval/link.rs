use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{ap, auc};
use crate::encoders::{Activation, Mlp, Mode};
use crate::error::{Error, Result};
use crate::graph::split::{sample_negatives, EdgeSplit};
use crate::graph::SparseGraph;
use crate::linalg::Matrix;
use crate::rng;
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape};

/// MLP edge decoder over the elementwise product of endpoint embeddings.
/// `decode_layers` counts linear layers, so a value of 1 is a logistic regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkDecoderConfig {
    pub decode_channels: usize,
    pub decode_layers: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for LinkDecoderConfig {
    fn default() -> Self {
        Self {
            decode_channels: 256,
            decode_layers: 2,
            epochs: 100,
            lr: 0.01,
            batch_size: 4096,
            patience: 20,
            seed: 0,
        }
    }
}

impl LinkDecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.decode_channels < 1 || self.decode_layers < 1 {
            return Err(Error::Config("link decoder needs at least one layer and one channel".into()));
        }
        if self.batch_size < 1 || self.patience < 1 || !(self.lr > 0.0) {
            return Err(Error::Config("link decoder batch_size, patience and lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkResult {
    pub val_auc: f64,
    pub val_ap: f64,
    pub test_auc: f64,
    pub test_ap: f64,
    pub best_epoch: usize,
}

fn pair_features(h: &Matrix, pairs: &[(usize, usize)]) -> Matrix {
    let mut out = Matrix::zeros(pairs.len(), h.cols());
    for (r, &(u, v)) in pairs.iter().enumerate() {
        out.row_mut(r)
            .iter_mut()
            .zip(h.row(u).iter().zip(h.row(v)))
            .for_each(|(o, (a, b))| *o = a * b);
    }
    out
}

fn score(mlp: &Mlp, store: &ParamStore, h: &Matrix, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    Ok(mlp.predict(store, &pair_features(h, pairs))?.into_vec())
}

fn ranking(mlp: &Mlp, store: &ParamStore, h: &Matrix, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Result<(f64, f64)> {
    let mut s = score(mlp, store, h, pos)?;
    s.extend(score(mlp, store, h, neg)?);
    let labels: Vec<bool> = (0..s.len()).map(|i| i < pos.len()).collect();
    Ok((auc(&s, &labels)?, ap(&s, &labels)?))
}

/// Train the decoder on `split.train` positives against freshly sampled
/// non-edges each epoch, select by validation AUC and report AUC/AP on the
/// held-out test pairs.
pub fn eval_link_prediction(h: &Matrix, split: &EdgeSplit, cfg: &LinkDecoderConfig) -> Result<LinkResult> {
    cfg.validate()?;
    let parts = [
        ("train", split.train.len()),
        ("val_pos", split.val_pos.len()),
        ("val_neg", split.val_neg.len()),
        ("test_pos", split.test_pos.len()),
        ("test_neg", split.test_neg.len()),
    ];
    if let Some((name, _)) = parts.iter().find(|(_, len)| *len == 0) {
        return Err(Error::InvalidArgument(format!("link prediction split `{name}` is empty")));
    }
    let n = h.rows();
    let train_graph = SparseGraph::from_edges(&split.train, n)?;
    let mut dims = vec![h.cols()];
    dims.extend(std::iter::repeat_n(cfg.decode_channels, cfg.decode_layers - 1));
    dims.push(1);
    let mut store = ParamStore::new();
    let mut init_rng = rng::seeded(rng::derive(cfg.seed, "decoder-init"));
    let mlp = Mlp::new(&mut store, "decoder", &dims, Activation::Relu, 0.0, &mut init_rng)?;
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, 0.0), &store);
    let mut rng = rng::seeded(rng::derive(cfg.seed, "decoder-batches"));

    let select = |store: &ParamStore| -> Result<f64> { Ok(ranking(&mlp, store, h, &split.val_pos, &split.val_neg)?.0) };
    let mut best = (select(&store)?, store.clone(), 0usize);
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let k = cfg.batch_size.min(split.train.len());
        let pos: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, split.train.len(), k)
            .into_iter()
            .map(|i| split.train[i])
            .collect();
        let neg = sample_negatives(&train_graph, k, &mut HashSet::new(), &mut rng)?;
        let mut pairs = pos;
        pairs.extend(neg);
        let targets: Vec<f64> = (0..2 * k).map(|i| if i < k { 1.0 } else { 0.0 }).collect();

        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xv = tape.constant(pair_features(h, &pairs));
        let logits = mlp.forward(&mut tape, &bound, xv, Mode::Eval)?;
        let loss = tape.bce_with_logits(logits, Arc::new(targets))?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("link decoder loss became {value} at epoch {epoch}")));
        }
        let mut grads = tape.backward(loss)?;
        adam.step(&mut store, &bound.collect(&mut grads))?;

        let metric = select(&store)?;
        if metric > best.0 {
            best = (metric, store.clone(), epoch + 1);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (_, params, best_epoch) = best;
    let (val_auc, val_ap) = ranking(&mlp, &params, h, &split.val_pos, &split.val_neg)?;
    let (test_auc, test_ap) = ranking(&mlp, &params, h, &split.test_pos, &split.test_neg)?;
    Ok(LinkResult {
        val_auc,
        val_ap,
        test_auc,
        test_ap,
        best_epoch,
    })
}
