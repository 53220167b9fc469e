use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::DatasetMeta;
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// SHA-256 over the config rendered as JSON with object keys in sorted
/// order, so the order of keys in the source file does not matter.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    let canonical = serde_json::to_string(&value).expect("value serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// `<dataset>-<method>-<strategy>-<criterion>-<hash prefix>`. Identical
/// configs map to the same id.
pub fn run_id(dataset: &str, cfg: &ExperimentConfig) -> String {
    let stem: String = dataset
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!(
        "{stem}-{}-{}-{}-{}",
        cfg.method.kind,
        cfg.sampler.strategy,
        cfg.criterion,
        &config_hash(cfg)[..12]
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub started_at_unix: u64,
    pub finished_at_unix: Option<u64>,
    pub dataset: DatasetMeta,
    pub seeds: Vec<u64>,
}

impl RunManifest {
    pub fn start(command: &str, cfg: &ExperimentConfig, dataset: DatasetMeta) -> Self {
        Self {
            run_id: run_id(&dataset.name, cfg),
            command: command.to_string(),
            config_hash: config_hash(cfg),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at_unix: unix_now(),
            finished_at_unix: None,
            dataset,
            seeds: cfg.seeds.clone(),
        }
    }

    pub fn finish(&mut self) {
        self.finished_at_unix = Some(unix_now());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))
    }
}

/// Layout of one run directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(out: &Path, run_id: &str) -> Result<Self> {
        let root = out.join(run_id);
        let ckpt = root.join(CHECKPOINT_DIR);
        fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        Ok(Self { root })
    }

    /// The run directory holding `checkpoint`, which must sit in its
    /// `checkpoints/` folder.
    pub fn of_checkpoint(checkpoint: &Path) -> Result<Self> {
        let parent = checkpoint.parent().filter(|p| p.file_name().is_some_and(|n| n == CHECKPOINT_DIR));
        match parent.and_then(Path::parent) {
            Some(root) => Ok(Self { root: root.to_path_buf() }),
            None => Err(Error::data(checkpoint, "checkpoint is not inside a run's checkpoints/ directory")),
        }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn config(&self) -> PathBuf {
        self.root.join(CONFIG_SNAPSHOT)
    }

    pub fn checkpoint(&self, seed: u64) -> PathBuf {
        self.root.join(CHECKPOINT_DIR).join(format!("seed-{seed}.ckpt"))
    }

    pub fn write_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        let path = self.config();
        fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))
    }
}

/// Seed encoded in a `seed-<n>.ckpt` file name.
pub fn checkpoint_seed(path: &Path) -> Result<u64> {
    path.file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("seed-"))
        .and_then(|n| n.strip_suffix(".ckpt"))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::data(path, "checkpoint file name must look like seed-<n>.ckpt"))
}
