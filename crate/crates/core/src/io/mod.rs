//! Dataset directories, config files with command-line overrides, run
//! manifests, and results emission as CSV, JSON, a summary table and SVG
//! charts.

mod config;
mod dataset;
mod manifest;
mod plots;
mod results;


pub use config::{load_config, parse_config, parse_seeds, ConfigOverrides};
pub use dataset::{
    load_dataset, save_dataset, DatasetMeta, EDGES_FILE, FEATURES_FILE, LABELS_FILE, META_FILE, SPLITS_FILE,
};
pub use manifest::{
    checkpoint_seed, config_hash, run_id, unix_now, RunDir, RunManifest, CHECKPOINT_DIR, CONFIG_SNAPSHOT,
    MANIFEST_FILE,
};
pub use plots::{chart_bars, emit_plots, render_svg, Bar, PLOTS_DIR};
pub use results::{
    emit_results, format_mean_std, group_rows, read_results_csv, results_csv, summary_table, EmittedResults, Metric,
    ResultsRow, HEADER, RESULTS_CSV, RESULTS_JSON, SUMMARY_FILE,
};
