mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphfm::experiment::Criterion;
use graphfm::io::{parse_seeds, ConfigOverrides};
use graphfm::sampling::Strategy;
use graphfm::ssl::MethodKind;
use graphfm::tensor::Precision;

#[derive(Parser, Debug)]
#[command(name = "graphfm", version, about = "Graph self-supervised learning benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a stochastic-block-model dataset directory.
    GenData(GenDataArgs),
    /// Train one configuration on every seed and record the results.
    Train(RunArgs),
    /// Score a saved checkpoint on selected downstream tasks.
    Eval(EvalArgs),
    /// Random hyper-parameter search followed by a full run of the winner.
    Sweep(SweepArgs),
    /// Measure activation memory and throughput without evaluation.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    blocks: usize,
    #[arg(long)]
    nodes_per_block: usize,
    #[arg(long)]
    p_in: f64,
    #[arg(long)]
    p_out: f64,
    #[arg(long)]
    feat_dim: usize,
    /// Standard deviation of the Gaussian noise around block centroids.
    #[arg(long, default_value_t = 1.0)]
    feat_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn method_arg(s: &str) -> Result<MethodKind, String> {
    MethodKind::parse(s).map_err(|e| e.to_string())
}

fn strategy_arg(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).map_err(|e| e.to_string())
}

fn criterion_arg(s: &str) -> Result<Criterion, String> {
    Criterion::parse(s).map_err(|e| e.to_string())
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn seeds_arg(s: &str) -> Result<SeedList, String> {
    parse_seeds(s).map(SeedList).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Dataset directory; overrides `dataset` in the config file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_parser = method_arg)]
    method: Option<MethodKind>,
    #[arg(long, value_parser = strategy_arg)]
    strategy: Option<Strategy>,
    #[arg(long, value_parser = criterion_arg)]
    criterion: Option<Criterion>,
    /// Comma-separated seeds, e.g. "1,2,3,4,5".
    #[arg(long, value_parser = seeds_arg)]
    seeds: Option<SeedList>,
    /// TOML experiment config; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum number of seeds trained at once.
    #[arg(long)]
    threads: Option<usize>,
    /// Parent directory of the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

impl RunArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            dataset: self.dataset.clone(),
            method: self.method,
            strategy: self.strategy,
            criterion: self.criterion,
            seeds: self.seeds.as_ref().map(|s| s.0.clone()),
            threads: self.threads,
            precision: (Precision::from_env() == Precision::F64).then_some(Precision::F64),
            budget: None,
            sweep_seed: None,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// A `seed-<n>.ckpt` file inside a run's checkpoints directory.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated subset of nc, lp and clu.
    #[arg(long, default_value = "nc,lp,clu")]
    tasks: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    budget: Option<usize>,
    /// Seed of the search itself, separate from the training seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write per-seed iteration counts and epochs to profile.json.
    #[arg(long)]
    profile: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
