use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{KMeansConfig, LinkDecoderConfig, ProbeConfig};
use crate::graph::SplitConfig;
use crate::sampling::SamplerConfig;
use crate::ssl::{MethodConfig, MethodKind};
use crate::tensor::Precision;

/// Validation metric that decides which checkpoint is kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Accuracy,
    Auc,
    Nmi,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Accuracy, Criterion::Auc, Criterion::Nmi];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Accuracy => "accuracy",
            Criterion::Auc => "auc",
            Criterion::Nmi => "nmi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| {
            Error::Config(format!("unknown criterion {s:?}; expected one of {{accuracy, auc, nmi}}"))
        })
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub budget: usize,
    pub seed: u64,
    /// Search-space names kept at their configured value instead of sampled.
    pub fixed: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            budget: 30,
            seed: 0,
            fixed: Vec::new(),
        }
    }
}

/// Everything one `train` or `sweep` invocation needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub criterion: Criterion,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    /// Upper bound on concurrently running trials.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub precision: Precision,
    pub method: MethodConfig,
    pub sampler: SamplerConfig,
    pub split: SplitConfig,
    pub probe: ProbeConfig,
    pub link: LinkDecoderConfig,
    pub kmeans: KMeansConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            criterion: Criterion::Accuracy,
            max_epochs: 200,
            eval_every: 5,
            patience: 10,
            seeds: vec![0, 1, 2, 3, 4],
            threads: None,
            precision: Precision::F32,
            method: MethodConfig::new(MethodKind::Gbt),
            sampler: SamplerConfig::default(),
            split: SplitConfig::default(),
            probe: ProbeConfig::default(),
            link: LinkDecoderConfig::default(),
            kmeans: KMeansConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Message-passing depth the batch plans must provide.
    pub fn plan_depth(&self) -> usize {
        let layers = self.method.encoder_config().num_layers();
        if self.method.kind == MethodKind::Graphmae {
            layers + 1
        } else {
            layers
        }
    }

    /// Switch to another method. Learning rate, weight decay and an explicit
    /// encoder carry over; method-specific tables are reset.
    pub fn set_method(&mut self, kind: MethodKind) {
        if kind == self.method.kind {
            return;
        }
        let mut m = MethodConfig::new(kind);
        m.lr = self.method.lr;
        m.weight_decay = self.method.weight_decay;
        m.encoder = self.method.encoder.clone();
        self.method = m;
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs < 1 || self.eval_every < 1 {
            return Err(Error::Config("max_epochs and eval_every must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if self.sweep.budget < 1 {
            return Err(Error::Config("sweep.budget must be at least 1".into()));
        }
        self.method.validate()?;
        self.sampler.validate(self.plan_depth())?;
        self.probe.validate()?;
        self.link.validate()?;
        Ok(())
    }
}
