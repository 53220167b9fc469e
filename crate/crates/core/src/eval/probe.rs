use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::accuracy;
use crate::encoders::{Activation, Mlp, Mode};
use crate::error::{Error, Result};
use crate::graph::split::NodeSplit;
use crate::linalg::Matrix;
use crate::rng;
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape};

/// MLP head trained on frozen embeddings. An empty `hidden` list gives a
/// linear probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256],
            epochs: 300,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            patience: 30,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("probe epochs must be at least 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("probe patience must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "probe lr {} must be positive and weight_decay {} non-negative",
                self.lr, self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
}

/// Train the probe on the train mask, keep the parameters with the best
/// validation accuracy and report test accuracy with them.
pub fn eval_node_classification(
    h: &Matrix,
    labels: &[usize],
    split: &NodeSplit,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    cfg.validate()?;
    let n = h.rows();
    if labels.len() != n || split.train_mask.len() != n {
        return Err(Error::shape(
            "eval_node_classification",
            format!("{n} embeddings, {} labels, {} mask entries", labels.len(), split.train_mask.len()),
        ));
    }
    let (train, val, test) = (split.train_indices(), split.val_indices(), split.test_indices());
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("node classification needs non-empty train, val and test masks".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut in_train = vec![false; num_classes];
    train.iter().for_each(|&i| in_train[labels[i]] = true);
    let mut present = vec![false; num_classes];
    labels.iter().for_each(|&y| present[y] = true);
    if let Some(c) = (0..num_classes).find(|&c| present[c] && !in_train[c]) {
        return Err(Error::InvalidArgument(format!("class {c} is absent from the train split")));
    }

    let mut dims = vec![h.cols()];
    dims.extend(&cfg.hidden);
    dims.push(num_classes);
    let mut store = ParamStore::new();
    let mut init_rng = rng::seeded(rng::derive(cfg.seed, "probe-init"));
    let mlp = Mlp::new(&mut store, "probe", &dims, Activation::Relu, cfg.dropout, &mut init_rng)?;
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay), &store);

    let x_train = h.gather_rows(&train);
    let y_train = Arc::new(train.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let x_val = h.gather_rows(&val);
    let y_val: Vec<usize> = val.iter().map(|&i| labels[i]).collect();
    let dropout_seed = rng::derive(cfg.seed, "probe-dropout");

    let mut best = (f64::NEG_INFINITY, store.clone(), 0usize);
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xv = tape.constant(x_train.clone());
        let mode = Mode::Train {
            seed: rng::derive_index(dropout_seed, epoch as u64),
        };
        let logits = mlp.forward(&mut tape, &bound, xv, mode)?;
        let loss = tape.softmax_cross_entropy(logits, Arc::clone(&y_train))?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("probe loss became {value} at epoch {epoch}")));
        }
        let mut grads = tape.backward(loss)?;
        adam.step(&mut store, &bound.collect(&mut grads))?;

        let val_acc = accuracy(&mlp.predict(&store, &x_val)?.argmax_rows(), &y_val)?;
        if val_acc > best.0 {
            best = (val_acc, store.clone(), epoch + 1);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (val_accuracy, params, best_epoch) = best;
    let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let test_accuracy = accuracy(&mlp.predict(&params, &h.gather_rows(&test))?.argmax_rows(), &y_test)?;
    Ok(ProbeResult {
        val_accuracy,
        test_accuracy,
        best_epoch,
    })
}
