//! Directory layout:
//!
//! ```text
//! meta.json     {"name", "num_nodes", "num_edges", "feat_dim", "num_classes"}
//! edges.csv     "u,v" per undirected edge, no header
//! features.bin  N x d little-endian f32, row-major, no header
//! labels.csv    one class id per line
//! splits.json   optional {"train": [...], "val": [...], "test": [...]}
//! ```
//!
//! Features are stored in single precision. A bundle whose features are
//! exactly representable as `f32` survives `save_dataset` then
//! `load_dataset` unchanged, and saving a loaded bundle reproduces every
//! file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DatasetBundle, NodeSplit, SparseGraph};
use crate::linalg::Matrix;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub feat_dim: usize,
    pub num_classes: usize,
}

impl DatasetMeta {
    pub fn of(bundle: &DatasetBundle) -> Self {
        let (num_nodes, num_edges, feat_dim, num_classes) = bundle.fingerprint();
        Self {
            name: bundle.name.clone(),
            num_nodes,
            num_edges,
            feat_dim,
            num_classes,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitsFile {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_index(path: &Path, row: usize, field: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::data(path, format!("row {row}: {:?} is not a non-negative integer", field.trim())))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

fn read_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (row, line) in lines(&text) {
        let mut cols = line.split(',');
        let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::data(path, format!("row {row}: expected two comma-separated columns")));
        };
        let (u, v) = (parse_index(path, row, a)?, parse_index(path, row, b)?);
        if let Some(bad) = [u, v].into_iter().find(|&x| x >= num_nodes) {
            return Err(Error::data(
                path,
                format!("row {row}: node {bad} is out of range for {num_nodes} nodes"),
            ));
        }
        if u == v {
            return Err(Error::data(path, format!("row {row}: self-loop on node {u}")));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    lines(&text).map(|(row, line)| parse_index(path, row, line)).collect()
}

fn read_features(path: &Path, rows: usize, cols: usize) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::data(
            path,
            format!("{} bytes, expected {expected} for {rows} x {cols} f32 values", bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(path, format!("non-finite value at row {} column {}", i / cols.max(1), i % cols.max(1))));
    }
    Matrix::new(rows, cols, values)
}

/// Read and validate a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let meta_path = dir.join(META_FILE);
    let meta: DatasetMeta =
        serde_json::from_str(&read_text(&meta_path)?).map_err(|e| Error::data(&meta_path, e.to_string()))?;
    let n = meta.num_nodes;

    let edges_path = dir.join(EDGES_FILE);
    let edges = read_edges(&edges_path, n)?;
    let graph = SparseGraph::from_edges(&edges, n)?;
    if graph.num_edges() != meta.num_edges || edges.len() != meta.num_edges {
        return Err(Error::data(
            &edges_path,
            format!(
                "meta.json declares {} edges but the file has {} rows forming {} distinct edges",
                meta.num_edges,
                edges.len(),
                graph.num_edges()
            ),
        ));
    }

    let features = read_features(&dir.join(FEATURES_FILE), n, meta.feat_dim)?;

    let labels_path = dir.join(LABELS_FILE);
    let labels = read_labels(&labels_path)?;
    if labels.len() != n {
        return Err(Error::data(
            &labels_path,
            format!("{} labels but meta.json declares {n} nodes", labels.len()),
        ));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if classes != meta.num_classes {
        return Err(Error::data(
            &labels_path,
            format!("labels span {classes} classes but meta.json declares {}", meta.num_classes),
        ));
    }

    let splits_path = dir.join(SPLITS_FILE);
    let public_split = if splits_path.exists() {
        let s: SplitsFile =
            serde_json::from_str(&read_text(&splits_path)?).map_err(|e| Error::data(&splits_path, e.to_string()))?;
        Some(
            NodeSplit::from_indices(n, &s.train, &s.val, &s.test)
                .map_err(|e| Error::data(&splits_path, e.to_string()))?,
        )
    } else {
        None
    };

    let bundle = DatasetBundle::new(meta.name, graph, features, labels, public_split)
        .map_err(|e| Error::data(dir, e.to_string()))?;
    let (nodes, edges, feats, classes) = bundle.fingerprint();
    log::info!(
        "loaded {}: {nodes} nodes, {edges} edges, {feats} features, {classes} classes",
        bundle.name
    );
    Ok(bundle)
}

/// Write `bundle` into `dir`, creating it if needed.
pub fn save_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut meta = serde_json::to_string_pretty(&DatasetMeta::of(bundle)).expect("meta serializes");
    meta.push('\n');
    write(&dir.join(META_FILE), meta.as_bytes())?;

    let mut edges = String::with_capacity(bundle.graph.num_edges() * 12);
    for (u, v) in bundle.graph.edges() {
        edges.push_str(&format!("{u},{v}\n"));
    }
    write(&dir.join(EDGES_FILE), edges.as_bytes())?;

    let mut feats = Vec::with_capacity(bundle.features.len() * 4);
    for &v in bundle.features.as_slice() {
        feats.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write(&dir.join(FEATURES_FILE), &feats)?;

    let mut labels = String::with_capacity(bundle.labels.len() * 3);
    for l in &bundle.labels {
        labels.push_str(&format!("{l}\n"));
    }
    write(&dir.join(LABELS_FILE), labels.as_bytes())?;

    let splits_path = dir.join(SPLITS_FILE);
    match &bundle.public_split {
        Some(s) => {
            let file = SplitsFile {
                train: s.train_indices(),
                val: s.val_indices(),
                test: s.test_indices(),
            };
            let mut text = serde_json::to_string(&file).expect("splits serialize");
            text.push('\n');
            write(&splits_path, text.as_bytes())?;
        }
        None if splits_path.exists() => fs::remove_file(&splits_path).map_err(|e| Error::io(&splits_path, e))?,
        None => {}
    }
    Ok(())
}
