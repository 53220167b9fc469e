use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{run_seeds, run_training, PreparedData, TrialResult};
use crate::error::{Error, Result};
use crate::rng;
use crate::space::{self, ParamSpec};
use crate::ssl::MethodConfig;

/// One sampled configuration: the method settings plus the shared knobs
/// that live outside the method table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub method: MethodConfig,
    pub batch_size: usize,
    pub decode_channels_lp: usize,
    pub decode_layers_lp: usize,
}

impl SweepPoint {
    /// `base` with this point's values substituted.
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.method = self.method.clone();
        cfg.sampler.batch_size = self.batch_size;
        cfg.link.decode_channels = self.decode_channels_lp;
        cfg.link.decode_layers = self.decode_layers_lp;
        cfg
    }
}

/// Draw `budget` configurations for `base.method.kind`. Trial `t` uses the
/// stream `derive_index(seed, t)` whatever the method, so methods swept with
/// the same seed see the same draws for the shared parameters.
pub fn random_search(base: &ExperimentConfig, budget: usize, seed: u64, fixed: &[String]) -> Result<Vec<SweepPoint>> {
    if budget < 1 {
        return Err(Error::Config("sweep budget must be at least 1".into()));
    }
    let kind = base.method.kind;
    let specs: Vec<&ParamSpec> = space::GENERAL.iter().chain(kind.space()).collect();
    if specs.is_empty() {
        return Err(Error::Config(format!("empty search space for {kind}")));
    }
    if let Some(bad) = fixed.iter().find(|f| !specs.iter().any(|s| s.name == f.as_str())) {
        return Err(Error::Config(format!("sweep.fixed names {bad:?}, which is not in the {kind} search space")));
    }
    (0..budget)
        .map(|t| {
            let mut r = rng::seeded(rng::derive_index(seed, t as u64));
            let mut point = SweepPoint {
                method: base.method.clone(),
                batch_size: base.sampler.batch_size,
                decode_channels_lp: base.link.decode_channels,
                decode_layers_lp: base.link.decode_layers,
            };
            for spec in &specs {
                let value = spec.domain.sample(&mut r);
                if fixed.iter().any(|f| f == spec.name) {
                    continue;
                }
                match spec.name {
                    "batch_size" => point.batch_size = value as usize,
                    "decode_channels_lp" => point.decode_channels_lp = value as usize,
                    "decode_layers_lp" => point.decode_layers_lp = value as usize,
                    name => point.method.set_hyperparameter(name, value)?,
                }
            }
            point.method.validate()?;
            Ok(point)
        })
        .collect()
}

/// Result of a sweep: every point with its validation score on the first
/// seed, the index of the winner and the winner rerun on all seeds.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub points: Vec<(SweepPoint, f64)>,
    pub best: usize,
    pub results: Vec<TrialResult>,
}

pub fn run_sweep(cfg: &ExperimentConfig, data: &PreparedData) -> Result<SweepOutcome> {
    cfg.validate()?;
    let points = random_search(cfg, cfg.sweep.budget, cfg.sweep.seed, &cfg.sweep.fixed)?;
    let first_seed = cfg.seeds[0];
    let mut scored = Vec::with_capacity(points.len());
    for p in points {
        let trial = run_training(&p.apply(cfg), data, first_seed)?;
        log::info!(
            "sweep point {}: validation {} = {:.4}",
            scored.len(),
            cfg.criterion,
            trial.best_val_metric
        );
        scored.push((p, trial.best_val_metric));
    }
    let best = scored
        .iter()
        .enumerate()
        .fold(0, |best, (i, (_, m))| if *m > scored[best].1 { i } else { best });
    let results = run_seeds(&scored[best].0.apply(cfg), data)?;
    Ok(SweepOutcome {
        points: scored,
        best,
        results,
    })
}
