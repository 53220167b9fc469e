use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    /// New best; the checkpoint was replaced.
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation metric and its checkpoint. Only a strict
/// improvement counts; `patience` is measured in evaluations.
#[derive(Clone, Debug)]
pub struct EarlyStopState<C> {
    patience: usize,
    best_metric: f64,
    best_eval: usize,
    best_checkpoint: Option<C>,
    evals: usize,
    evals_since_improve: usize,
}

impl<C> EarlyStopState<C> {
    pub fn new(patience: usize) -> Result<Self> {
        if patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(Self {
            patience,
            best_metric: f64::NEG_INFINITY,
            best_eval: 0,
            best_checkpoint: None,
            evals: 0,
            evals_since_improve: 0,
        })
    }

    /// Record one evaluation. `snapshot` is called only on improvement.
    pub fn update(&mut self, metric: f64, snapshot: impl FnOnce() -> C) -> Result<Decision> {
        if metric.is_nan() {
            return Err(Error::Numeric(format!("validation metric is NaN at evaluation {}", self.evals + 1)));
        }
        self.evals += 1;
        if metric > self.best_metric {
            self.best_metric = metric;
            self.best_eval = self.evals;
            self.best_checkpoint = Some(snapshot());
            self.evals_since_improve = 0;
            return Ok(Decision::Improved);
        }
        self.evals_since_improve += 1;
        if self.evals_since_improve >= self.patience {
            Ok(Decision::Stop)
        } else {
            Ok(Decision::Continue)
        }
    }

    pub fn best_metric(&self) -> f64 {
        self.best_metric
    }

    /// 1-based index of the evaluation that produced the best metric.
    pub fn best_eval(&self) -> usize {
        self.best_eval
    }

    pub fn best_checkpoint(&self) -> Option<&C> {
        self.best_checkpoint.as_ref()
    }

    pub fn into_best_checkpoint(self) -> Option<C> {
        self.best_checkpoint
    }

    pub fn evals(&self) -> usize {
        self.evals
    }

    pub fn evals_since_improve(&self) -> usize {
        self.evals_since_improve
    }
}
