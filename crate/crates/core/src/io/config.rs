use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{Criterion, ExperimentConfig};
use crate::sampling::Strategy;
use crate::ssl::MethodKind;
use crate::tensor::Precision;

/// Values given on the command line. Each one present replaces the
/// corresponding config-file entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigOverrides {
    pub dataset: Option<PathBuf>,
    pub method: Option<MethodKind>,
    pub strategy: Option<Strategy>,
    pub criterion: Option<Criterion>,
    pub seeds: Option<Vec<u64>>,
    pub threads: Option<usize>,
    pub precision: Option<Precision>,
    pub budget: Option<usize>,
    pub sweep_seed: Option<u64>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(m) = self.method {
            cfg.set_method(m);
        }
        if let Some(s) = self.strategy {
            cfg.sampler.strategy = s;
        }
        if let Some(c) = self.criterion {
            cfg.criterion = c;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(p) = self.precision {
            cfg.precision = p;
        }
        if let Some(b) = self.budget {
            cfg.sweep.budget = b;
        }
        if let Some(s) = self.sweep_seed {
            cfg.sweep.seed = s;
        }
    }
}

/// Parse a comma-separated seed list such as `"1,2,3"`.
pub fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    let seeds = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|_| Error::Config(format!("seed {s:?} is not a non-negative integer"))))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

/// Config text (empty text means all defaults) with `overrides` applied on
/// top, validated after the merge.
pub fn parse_config(text: &str, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// [`parse_config`] reading the text from `path` when one is given.
pub fn load_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}
