//! Trial orchestration: the training loop with early stopping on a chosen
//! validation criterion, seeded random hyperparameter search, multi-seed
//! aggregation and efficiency profiling.

mod config;
mod early_stop;
mod runner;
mod search;


use serde::{Deserialize, Serialize};

pub use config::{Criterion, ExperimentConfig, SweepConfig};
pub use early_stop::{Decision, EarlyStopState};
pub use runner::{
    activation_mb, embed_checkpoint, evaluate_all, evaluate_tasks, profile_efficiency, profile_training, run_seeds, run_training, validation_metric,
    worker_count, EfficiencyReport, EvalSettings, PreparedData, RunTrace, Tasks, TrialResult,
};
pub use search::{random_search, run_sweep, SweepOutcome, SweepPoint};

use crate::error::{Error, Result};

/// Mean and sample standard deviation of one metric across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean with the `n - 1` standard deviation; a single value has std 0.
pub fn aggregate_seeds(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate an empty result list".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(Aggregate { mean, std, n })
}
