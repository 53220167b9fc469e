use std::fs;

use graphfm::experiment::{
    embed_checkpoint, evaluate_tasks, profile_training, run_seeds, run_sweep, EfficiencyReport, EvalSettings,
    ExperimentConfig, PreparedData, Tasks, TrialResult,
};
use graphfm::graph::{sbm_generate, SbmConfig};
use graphfm::io::{
    checkpoint_seed, emit_plots, emit_results, load_config, load_dataset, parse_config, save_dataset,
    summary_table, ConfigOverrides, DatasetMeta, ResultsRow, RunDir, RunManifest,
};
use graphfm::tensor::checkpoint;
use graphfm::{Error, Result};
use serde::Serialize;

use crate::{BenchArgs, EvalArgs, GenDataArgs, RunArgs, SweepArgs};

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let bundle = sbm_generate(&SbmConfig {
        blocks: a.blocks,
        nodes_per_block: a.nodes_per_block,
        p_in: a.p_in,
        p_out: a.p_out,
        feat_dim: a.feat_dim,
        feat_noise: a.feat_noise,
        seed: a.seed,
    })?;
    save_dataset(&bundle, &a.out)?;
    let (n, m, d, c) = bundle.fingerprint();
    println!("wrote {}: {n} nodes, {m} edges, {d} features, {c} classes", a.out.display());
    Ok(())
}

/// Config, dataset and run directory shared by `train`, `sweep` and `bench`.
struct Session {
    cfg: ExperimentConfig,
    data: PreparedData,
    manifest: RunManifest,
    run: RunDir,
}

impl Session {
    fn open(command: &str, args: &RunArgs, overrides: &ConfigOverrides) -> Result<Self> {
        let cfg = load_config(args.config.as_deref(), overrides)?;
        let dir = cfg
            .dataset
            .clone()
            .ok_or_else(|| Error::Config("no dataset given; pass --dataset or set `dataset` in the config".into()))?;
        let bundle = load_dataset(&dir)?;
        let meta = DatasetMeta::of(&bundle);
        let data = PreparedData::new(bundle, &cfg.split)?;
        let manifest = RunManifest::start(command, &cfg, meta);
        let run = RunDir::create(&args.out, &manifest.run_id)?;
        run.write_config(&cfg)?;
        manifest.write(&run.manifest())?;
        Ok(Self {
            cfg,
            data,
            manifest,
            run,
        })
    }

    fn dataset_name(&self) -> String {
        self.data.bundle.name.clone()
    }

    fn finish(mut self, rows: &[ResultsRow]) -> Result<()> {
        emit_results(rows, &self.run.root)?;
        emit_plots(rows, &self.run.root)?;
        self.manifest.finish();
        self.manifest.write(&self.run.manifest())?;
        print!("{}", summary_table(rows));
        println!("run directory: {}", self.run.root.display());
        Ok(())
    }
}

fn save_trials(s: &Session, trials: &[TrialResult]) -> Result<Vec<ResultsRow>> {
    let name = s.dataset_name();
    trials
        .iter()
        .map(|t| {
            checkpoint::save(&t.checkpoint, &s.run.checkpoint(t.seed))?;
            Ok(ResultsRow::from_trial(&name, t))
        })
        .collect()
}

pub fn train(a: &RunArgs) -> Result<()> {
    let s = Session::open("train", a, &a.overrides())?;
    let trials = run_seeds(&s.cfg, &s.data)?;
    let rows = save_trials(&s, &trials)?;
    s.finish(&rows)
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    index: usize,
    validation: f64,
    point: &'a graphfm::experiment::SweepPoint,
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let mut overrides = a.run.overrides();
    overrides.budget = a.budget;
    overrides.sweep_seed = a.seed;
    let s = Session::open("sweep", &a.run, &overrides)?;
    let outcome = run_sweep(&s.cfg, &s.data)?;
    let records: Vec<SweepRecord> = outcome
        .points
        .iter()
        .enumerate()
        .map(|(index, (point, validation))| SweepRecord {
            index,
            validation: *validation,
            point,
        })
        .collect();
    let path = s.run.root.join("sweep.json");
    let text = serde_json::to_string_pretty(&serde_json::json!({ "best": outcome.best, "points": records }))
        .expect("sweep record serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })?;
    let best_cfg = outcome.points[outcome.best].0.apply(&s.cfg);
    let path = s.run.root.join("best_config.toml");
    fs::write(&path, best_cfg.to_toml()?).map_err(|e| Error::Io { path, source: e })?;
    let rows = save_trials(&s, &outcome.results)?;
    s.finish(&rows)
}

#[derive(Serialize)]
struct ProfileRecord {
    seed: u64,
    #[serde(flatten)]
    report: EfficiencyReport,
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let s = Session::open("bench", &a.run, &a.run.overrides())?;
    let name = s.dataset_name();
    let mut rows = Vec::new();
    let mut profile = Vec::new();
    for &seed in &s.cfg.seeds {
        let report = profile_training(&s.cfg, &s.data, seed)?;
        let mut row = ResultsRow::from_metrics(
            &name,
            s.cfg.method.kind.as_str(),
            s.cfg.sampler.strategy.as_str(),
            s.cfg.criterion.as_str(),
            seed,
            &Default::default(),
        );
        row.act_mem_mb = Some(report.act_mem_mb);
        row.throughput_it_s = Some(report.throughput_it_s);
        rows.push(row);
        profile.push(ProfileRecord { seed, report });
    }
    if a.profile {
        let path = s.run.root.join("profile.json");
        let text = serde_json::to_string_pretty(&profile).expect("profile serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })?;
    }
    s.finish(&rows)
}

fn run_config(run: &RunDir) -> Result<ExperimentConfig> {
    let path = run.config();
    let text = fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
    parse_config(&text, &ConfigOverrides::default())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let tasks = Tasks::parse(&a.tasks)?;
    let run = RunDir::of_checkpoint(&a.checkpoint)?;
    let seed = checkpoint_seed(&a.checkpoint)?;
    let cfg = run_config(&run)?;
    let params = checkpoint::load(&a.checkpoint)?;
    let bundle = load_dataset(&a.dataset)?;
    let name = bundle.name.clone();
    let data = PreparedData::new(bundle, &cfg.split)?;
    let h = embed_checkpoint(&cfg.method, &params, &data)?;
    let (_, test) = evaluate_tasks(&h, &data, &EvalSettings::for_trial(&cfg, seed), tasks)?;
    let row = ResultsRow::from_metrics(
        &name,
        cfg.method.kind.as_str(),
        cfg.sampler.strategy.as_str(),
        cfg.criterion.as_str(),
        seed,
        &test,
    );
    emit_results(std::slice::from_ref(&row), &a.out)?;
    print!("{}", summary_table(std::slice::from_ref(&row)));
    println!("results written to {}", a.out.display());
    Ok(())
}
