use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricsRecord;
use crate::experiment::{aggregate_seeds, TrialResult};

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const SUMMARY_FILE: &str = "summary.md";

/// Column order of `results.csv`.
pub const HEADER: [&str; 13] = [
    "dataset",
    "method",
    "strategy",
    "criterion",
    "seed",
    "acc",
    "auc",
    "ap",
    "nmi",
    "ari",
    "act_mem_mb",
    "throughput_it_s",
    "best_epoch",
];

/// One trained seed. Quality metrics are test-split fractions; a task that
/// was not run leaves its cells empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub dataset: String,
    pub method: String,
    pub strategy: String,
    pub criterion: String,
    pub seed: u64,
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub act_mem_mb: Option<f64>,
    pub throughput_it_s: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl ResultsRow {
    pub fn from_trial(dataset: &str, trial: &TrialResult) -> Self {
        let mut row = Self::from_metrics(
            dataset,
            trial.kind().as_str(),
            trial.strategy.as_str(),
            trial.criterion.as_str(),
            trial.seed,
            &trial.test,
        );
        row.act_mem_mb = Some(trial.efficiency.act_mem_mb);
        row.throughput_it_s = Some(trial.efficiency.throughput_it_s);
        row.best_epoch = Some(trial.best_epoch);
        row
    }

    pub fn from_metrics(
        dataset: &str,
        method: &str,
        strategy: &str,
        criterion: &str,
        seed: u64,
        m: &MetricsRecord,
    ) -> Self {
        Self {
            dataset: dataset.to_string(),
            method: method.to_string(),
            strategy: strategy.to_string(),
            criterion: criterion.to_string(),
            seed,
            acc: m.accuracy,
            auc: m.auc,
            ap: m.ap,
            nmi: m.nmi,
            ari: m.ari,
            act_mem_mb: None,
            throughput_it_s: None,
            best_epoch: None,
        }
    }

    fn check_finite(&self) -> Result<()> {
        for (name, v) in Metric::ALL.iter().map(|m| (m.column(), m.value(self))) {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "{name} is not finite for {} seed {}",
                    self.method, self.seed
                )));
            }
        }
        Ok(())
    }
}

/// A numeric column that can be aggregated and plotted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Acc,
    Auc,
    Ap,
    Nmi,
    Ari,
    ActMem,
    Throughput,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Acc,
        Metric::Auc,
        Metric::Ap,
        Metric::Nmi,
        Metric::Ari,
        Metric::ActMem,
        Metric::Throughput,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Metric::Acc => "acc",
            Metric::Auc => "auc",
            Metric::Ap => "ap",
            Metric::Nmi => "nmi",
            Metric::Ari => "ari",
            Metric::ActMem => "act_mem_mb",
            Metric::Throughput => "throughput_it_s",
        }
    }

    pub fn value(self, row: &ResultsRow) -> Option<f64> {
        match self {
            Metric::Acc => row.acc,
            Metric::Auc => row.auc,
            Metric::Ap => row.ap,
            Metric::Nmi => row.nmi,
            Metric::Ari => row.ari,
            Metric::ActMem => row.act_mem_mb,
            Metric::Throughput => row.throughput_it_s,
        }
    }

    /// Factor applied for presentation: quality scores are shown in percent.
    pub fn display_scale(self) -> f64 {
        match self {
            Metric::ActMem | Metric::Throughput => 1.0,
            _ => 100.0,
        }
    }

    /// Present values of this metric scaled for display.
    pub fn displayed<'a>(self, rows: impl IntoIterator<Item = &'a ResultsRow>) -> Vec<f64> {
        rows.into_iter()
            .filter_map(|r| self.value(r))
            .map(|v| v * self.display_scale())
            .collect()
    }
}

/// Rows grouped by `(dataset, method, strategy)` in order of first
/// appearance.
pub fn group_rows(rows: &[ResultsRow]) -> Vec<((String, String, String), Vec<&ResultsRow>)> {
    let mut groups: Vec<((String, String, String), Vec<&ResultsRow>)> = Vec::new();
    for r in rows {
        let key = (r.dataset.clone(), r.method.clone(), r.strategy.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
}

/// `mean±std` with two decimals, or `-` when no value is present.
pub fn format_mean_std(values: &[f64]) -> String {
    match aggregate_seeds(values) {
        Ok(a) => format!("{:.2}±{:.2}", a.mean, a.std),
        Err(_) => "-".to_string(),
    }
}

/// Markdown table with one line per `(dataset, method, strategy)`.
pub fn summary_table(rows: &[ResultsRow]) -> String {
    let mut out = String::from("| dataset | method | strategy | seeds |");
    for m in Metric::ALL {
        write!(out, " {} |", m.column()).unwrap();
    }
    out.push_str("\n|---|---|---|---|");
    out.push_str(&"---|".repeat(Metric::ALL.len()));
    out.push('\n');
    for ((dataset, method, strategy), members) in group_rows(rows) {
        write!(out, "| {dataset} | {method} | {strategy} | {} |", members.len()).unwrap();
        for m in Metric::ALL {
            write!(out, " {} |", format_mean_std(&m.displayed(members.iter().copied()))).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn results_csv(rows: &[ResultsRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(HEADER).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::data(path, format!("row {}: {e}", i + 1))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmittedResults {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub summary: PathBuf,
}

/// Write `results.csv`, `results.json` and `summary.md` into `out_dir`.
pub fn emit_results(rows: &[ResultsRow], out_dir: &Path) -> Result<EmittedResults> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no results rows to emit".into()));
    }
    for r in rows {
        r.check_finite()?;
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = EmittedResults {
        csv: out_dir.join(RESULTS_CSV),
        json: out_dir.join(RESULTS_JSON),
        summary: out_dir.join(SUMMARY_FILE),
    };
    fs::write(&files.csv, results_csv(rows)?).map_err(|e| Error::io(&files.csv, e))?;
    let mut json = serde_json::to_string_pretty(rows).expect("rows serialize");
    json.push('\n');
    fs::write(&files.json, json).map_err(|e| Error::io(&files.json, e))?;
    fs::write(&files.summary, summary_table(rows)).map_err(|e| Error::io(&files.summary, e))?;
    Ok(files)
}
