use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Criterion, ExperimentConfig};
use super::early_stop::{Decision, EarlyStopState};
use crate::error::{Error, Result};
use crate::eval::{
    eval_link_prediction, eval_node_classification, kmeans, score_clustering, KMeansConfig, LinkDecoderConfig,
    MetricsRecord, ProbeConfig,
};
use crate::graph::{normalize_adjacency, DatasetBundle, SparseGraph, SplitConfig, SplitSpec};
use crate::linalg::{Matrix, SparseMatrix};
use crate::rng;
use crate::sampling::{Batcher, Strategy};
use crate::ssl::{Inputs, MethodConfig, MethodKind, SslMethod};
use crate::tensor::{ParamStore, Precision};

/// A dataset with its splits and the message-passing graph every trial
/// trains and embeds on. Held-out link-prediction edges are removed from
/// that graph.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub bundle: Arc<DatasetBundle>,
    pub split: SplitSpec,
    pub graph: Arc<SparseGraph>,
    pub adj: Arc<SparseMatrix>,
}

impl PreparedData {
    pub fn new(bundle: DatasetBundle, split_cfg: &SplitConfig) -> Result<Self> {
        let split = bundle.split(split_cfg)?;
        let graph = SparseGraph::from_edges(&split.edges.train, bundle.num_nodes())?;
        let adj = Arc::new(normalize_adjacency(&graph));
        Ok(Self {
            bundle: Arc::new(bundle),
            split,
            graph: Arc::new(graph),
            adj,
        })
    }

    pub fn inputs(&self) -> Inputs<'_> {
        Inputs {
            graph: &self.graph,
            adj: &self.adj,
            features: &self.bundle.features,
        }
    }
}

/// Counters collected while training, before conversion to a report.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub iterations: usize,
    pub train_seconds: f64,
    pub max_retained_elements: usize,
    pub epochs_run: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    /// Peak activation memory of one iteration, in MiB.
    pub act_mem_mb: f64,
    pub throughput_it_s: f64,
    pub epochs_run: usize,
    pub iterations: usize,
}

/// Convert a trace into throughput (iterations per training second) and
/// the activation memory of the largest iteration.
pub fn profile_efficiency(trace: &RunTrace, precision: Precision) -> Result<EfficiencyReport> {
    if trace.iterations == 0 {
        return Err(Error::InvalidArgument("efficiency needs at least one training iteration".into()));
    }
    if !(trace.train_seconds > 0.0) {
        return Err(Error::InvalidArgument(format!("training time {} s is not positive", trace.train_seconds)));
    }
    Ok(EfficiencyReport {
        act_mem_mb: activation_mb(trace.max_retained_elements, precision),
        throughput_it_s: trace.iterations as f64 / trace.train_seconds,
        epochs_run: trace.epochs_run,
        iterations: trace.iterations,
    })
}

pub fn activation_mb(elements: usize, precision: Precision) -> f64 {
    (elements * precision.bytes()) as f64 / (1u64 << 20) as f64
}

/// Outcome of one training run for one seed.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub method: MethodConfig,
    pub strategy: Strategy,
    pub criterion: Criterion,
    pub seed: u64,
    pub val: MetricsRecord,
    pub test: MetricsRecord,
    pub efficiency: EfficiencyReport,
    pub best_epoch: usize,
    /// Validation value of the criterion for the kept checkpoint.
    pub best_val_metric: f64,
    /// `(epoch, validation criterion)` for every evaluation.
    pub history: Vec<(usize, f64)>,
    pub checkpoint: ParamStore,
}

impl TrialResult {
    pub fn kind(&self) -> MethodKind {
        self.method.kind
    }
}

/// Evaluation settings with every random draw keyed by the trial seed.
#[derive(Clone, Debug)]
pub struct EvalSettings {
    pub probe: ProbeConfig,
    pub link: LinkDecoderConfig,
    pub kmeans: KMeansConfig,
}

impl EvalSettings {
    pub fn for_trial(cfg: &ExperimentConfig, seed: u64) -> Self {
        Self {
            probe: ProbeConfig {
                seed: rng::derive(seed, "probe"),
                ..cfg.probe.clone()
            },
            link: LinkDecoderConfig {
                seed: rng::derive(seed, "link"),
                ..cfg.link.clone()
            },
            kmeans: KMeansConfig {
                seed: rng::derive(seed, "kmeans"),
                ..cfg.kmeans.clone()
            },
        }
    }
}

/// Validation value of a single criterion for embeddings `h`.
pub fn validation_metric(h: &Matrix, data: &PreparedData, eval: &EvalSettings, criterion: Criterion) -> Result<f64> {
    let b = &data.bundle;
    match criterion {
        Criterion::Accuracy => Ok(eval_node_classification(h, &b.labels, &data.split.nodes, &eval.probe)?.val_accuracy),
        Criterion::Auc => Ok(eval_link_prediction(h, &data.split.edges, &eval.link)?.val_auc),
        Criterion::Nmi => {
            let fit = kmeans(h, b.num_classes, &eval.kmeans)?;
            Ok(score_clustering(&fit.assignments, &b.labels, Some(&data.split.nodes.val_indices()))?.nmi)
        }
    }
}

/// Which downstream tasks to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tasks {
    pub classification: bool,
    pub link_prediction: bool,
    pub clustering: bool,
}

impl Tasks {
    pub const ALL: Tasks = Tasks {
        classification: true,
        link_prediction: true,
        clustering: true,
    };

    /// Parse a comma-separated list drawn from `nc`, `lp` and `clu`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut t = Tasks {
            classification: false,
            link_prediction: false,
            clustering: false,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "nc" => t.classification = true,
                "lp" => t.link_prediction = true,
                "clu" => t.clustering = true,
                other => {
                    return Err(Error::Config(format!("unknown task {other:?}; expected a subset of {{nc, lp, clu}}")))
                }
            }
        }
        if t == (Tasks { classification: false, link_prediction: false, clustering: false }) {
            return Err(Error::Config("no tasks selected".into()));
        }
        Ok(t)
    }
}

/// The selected tasks on validation and test; skipped tasks stay empty.
pub fn evaluate_tasks(
    h: &Matrix,
    data: &PreparedData,
    eval: &EvalSettings,
    tasks: Tasks,
) -> Result<(MetricsRecord, MetricsRecord)> {
    let b = &data.bundle;
    let (mut val, mut test) = (MetricsRecord::default(), MetricsRecord::default());
    if tasks.classification {
        let nc = eval_node_classification(h, &b.labels, &data.split.nodes, &eval.probe)?;
        val.accuracy = Some(nc.val_accuracy);
        test.accuracy = Some(nc.test_accuracy);
    }
    if tasks.link_prediction {
        let lp = eval_link_prediction(h, &data.split.edges, &eval.link)?;
        (val.auc, val.ap) = (Some(lp.val_auc), Some(lp.val_ap));
        (test.auc, test.ap) = (Some(lp.test_auc), Some(lp.test_ap));
    }
    if tasks.clustering {
        let fit = kmeans(h, b.num_classes, &eval.kmeans)?;
        let cv = score_clustering(&fit.assignments, &b.labels, Some(&data.split.nodes.val_indices()))?;
        let ct = score_clustering(&fit.assignments, &b.labels, Some(&data.split.nodes.test_indices()))?;
        (val.nmi, val.ari) = (Some(cv.nmi), Some(cv.ari));
        (test.nmi, test.ari) = (Some(ct.nmi), Some(ct.ari));
    }
    Ok((val, test))
}

/// All three tasks on validation and test.
pub fn evaluate_all(h: &Matrix, data: &PreparedData, eval: &EvalSettings) -> Result<(MetricsRecord, MetricsRecord)> {
    evaluate_tasks(h, data, eval, Tasks::ALL)
}

/// Embeddings of a trained checkpoint on the prepared message-passing graph.
pub fn embed_checkpoint(method: &MethodConfig, params: &ParamStore, data: &PreparedData) -> Result<Matrix> {
    let mut m = SslMethod::new(method, data.bundle.feat_dim(), 0)?;
    m.load_params(params)?;
    m.embed(&data.adj, &data.bundle.features)
}

/// Train one seed with early stopping on `cfg.criterion`, then score all
/// three tasks with the best checkpoint.
pub fn run_training(cfg: &ExperimentConfig, data: &PreparedData, seed: u64) -> Result<TrialResult> {
    cfg.validate()?;
    let mut method = SslMethod::new(&cfg.method, data.bundle.feat_dim(), seed)?;
    let batcher = Batcher::new(
        cfg.sampler.clone(),
        Arc::clone(&data.graph),
        Arc::clone(&data.adj),
        method.depth(),
        rng::derive(seed, "batches"),
    )?;
    let eval = EvalSettings::for_trial(cfg, seed);
    let inputs = data.inputs();
    let mut stop = EarlyStopState::new(cfg.patience)?;
    let mut trace = RunTrace::default();
    let mut history = Vec::new();
    let mut best_epoch = 0;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        for plan in batcher.epoch(epoch as u64 - 1)? {
            let stats = method.training_step(&inputs, Some(&plan))?;
            trace.iterations += 1;
            trace.max_retained_elements = trace.max_retained_elements.max(stats.retained_elements);
        }
        trace.train_seconds += started.elapsed().as_secs_f64();
        trace.epochs_run = epoch;

        if epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs {
            let h = method.embed(&data.adj, &data.bundle.features)?;
            let metric = validation_metric(&h, data, &eval, cfg.criterion)?;
            history.push((epoch, metric));
            match stop.update(metric, || method.params().clone())? {
                Decision::Improved => best_epoch = epoch,
                Decision::Continue => {}
                Decision::Stop => break,
            }
        }
    }

    let best_val_metric = stop.best_metric();
    let checkpoint = stop
        .into_best_checkpoint()
        .ok_or_else(|| Error::Numeric("no evaluation produced a usable validation metric".into()))?;
    method.load_params(&checkpoint)?;
    let h = method.embed(&data.adj, &data.bundle.features)?;
    let (val, test) = evaluate_all(&h, data, &eval)?;
    Ok(TrialResult {
        method: cfg.method.clone(),
        strategy: cfg.sampler.strategy,
        criterion: cfg.criterion,
        seed,
        val,
        test,
        efficiency: profile_efficiency(&trace, cfg.precision)?,
        best_epoch,
        best_val_metric,
        history,
        checkpoint,
    })
}

/// Train for `cfg.max_epochs` epochs without any evaluation and report
/// activation memory and throughput only.
pub fn profile_training(cfg: &ExperimentConfig, data: &PreparedData, seed: u64) -> Result<EfficiencyReport> {
    cfg.validate()?;
    let mut method = SslMethod::new(&cfg.method, data.bundle.feat_dim(), seed)?;
    let batcher = Batcher::new(
        cfg.sampler.clone(),
        Arc::clone(&data.graph),
        Arc::clone(&data.adj),
        method.depth(),
        rng::derive(seed, "batches"),
    )?;
    let inputs = data.inputs();
    let mut trace = RunTrace::default();
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        for plan in batcher.epoch(epoch as u64 - 1)? {
            let stats = method.training_step(&inputs, Some(&plan))?;
            trace.iterations += 1;
            trace.max_retained_elements = trace.max_retained_elements.max(stats.retained_elements);
        }
        trace.train_seconds += started.elapsed().as_secs_f64();
        trace.epochs_run = epoch;
    }
    profile_efficiency(&trace, cfg.precision)
}

/// Worker count for concurrent trials: the config value, else
/// `GRAPHFM_THREADS`, else the number of available cores.
pub fn worker_count(cfg: &ExperimentConfig) -> usize {
    cfg.threads
        .or_else(|| std::env::var("GRAPHFM_THREADS").ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run every seed of `cfg.seeds`, up to [`worker_count`] at a time.
/// Results come back in seed order.
pub fn run_seeds(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| cfg.seeds.par_iter().map(|&s| run_training(cfg, data, s)).collect())
}
