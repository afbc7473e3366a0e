//! CSV and JSON readers and writers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! writer/reader pair reproduces values bit for bit.

use crate::bench::{BenchReport, ReplicationRow, SummaryRow};
use crate::effects::EffectReport;
use crate::graph::{GraphError, WeightedDag};
use crate::mec::{Cpdag, MecError};
use crate::optimizer::{DualStep, FitResult};
use crate::scm::{Dataset, ScmError};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", .path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", .path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: row {row}, column {col} ({label}): {problem}", .path.display())]
    Cell {
        path: PathBuf,
        row: usize,
        col: usize,
        label: String,
        problem: String,
    },
    #[error("{}: {msg}", .path.display())]
    Format { path: PathBuf, msg: String },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("{}: duplicate column label {label:?}", .path.display())]
    DuplicateLabel { path: PathBuf, label: String },
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Mec(#[from] MecError),
}

impl IoError {
    fn format(path: &Path, msg: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn headers(path: &Path, rdr: &mut csv::Reader<fs::File>) -> Result<Vec<String>, IoError> {
    let labels: Vec<String> = rdr
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(str::to_string)
        .collect();
    for (k, label) in labels.iter().enumerate() {
        if labels[..k].contains(label) {
            return Err(IoError::DuplicateLabel {
                path: path.to_path_buf(),
                label: label.clone(),
            });
        }
    }
    Ok(labels)
}

/// Reads a numeric table with a header row. Rows are numbered from 1 after
/// the header in error messages.
fn read_numeric(path: &Path) -> Result<(Vec<String>, DMatrix<f64>), IoError> {
    let mut rdr = reader(path)?;
    let labels = headers(path, &mut rdr)?;
    if labels.is_empty() {
        return Err(IoError::format(path, "empty header"));
    }
    let mut cells = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        if record.len() != labels.len() {
            return Err(IoError::format(
                path,
                format!("row {} has {} fields, expected {}", r + 1, record.len(), labels.len()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            let cell_err = |problem: String| IoError::Cell {
                path: path.to_path_buf(),
                row: r + 1,
                col: c + 1,
                label: labels[c].clone(),
                problem,
            };
            if field.is_empty() {
                return Err(cell_err("blank cell".into()));
            }
            let value: f64 = field
                .parse()
                .map_err(|_| cell_err(format!("non-numeric value {field:?}")))?;
            if !value.is_finite() {
                return Err(cell_err(format!("non-finite value {field:?}")));
            }
            cells.push(value);
        }
        rows += 1;
    }
    Ok((labels.clone(), DMatrix::from_row_slice(rows, labels.len(), &cells)))
}

/// How the outcome column of a data file is named on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeColumn {
    Label(String),
    Index(usize),
}

impl FromStr for OutcomeColumn {
    type Err = std::convert::Infallible;

    /// Integers become indices; anything else is a label. Use
    /// [`OutcomeColumn::Label`] directly for numeric labels.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => OutcomeColumn::Index(i),
            Err(_) => OutcomeColumn::Label(s.to_string()),
        })
    }
}

/// Loads a data file and moves the outcome column to the last position.
pub fn load_csv(path: impl AsRef<Path>, outcome: &OutcomeColumn) -> Result<Dataset, IoError> {
    let path = path.as_ref();
    let (labels, values) = read_numeric(path)?;
    let y = match outcome {
        OutcomeColumn::Label(name) => labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| IoError::UnknownColumn(name.clone()))?,
        OutcomeColumn::Index(i) if *i < labels.len() => *i,
        OutcomeColumn::Index(i) => return Err(IoError::UnknownColumn(format!("index {i}"))),
    };
    let order: Vec<usize> = (0..labels.len()).filter(|&c| c != y).chain([y]).collect();
    let values = values.select_columns(&order);
    let labels = order.iter().map(|&c| labels[c].clone()).collect();
    Ok(Dataset::new(values, labels, order.len() - 1)?)
}

/// Reads a file written by [`write_dataset`]; the outcome is the last column.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, IoError> {
    let path = path.as_ref();
    let (labels, values) = read_numeric(path)?;
    let outcome = labels.len() - 1;
    Ok(Dataset::new(values, labels, outcome)?)
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<(), IoError> {
    let path = path.as_ref();
    write_matrix(path, data.labels(), data.values())
}

fn write_matrix(path: &Path, labels: &[String], values: &DMatrix<f64>) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(labels).map_err(csv_err(path))?;
    for row in values.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Adjacency matrix with a label header; row `i` holds the outgoing weights
/// of node `i`.
pub fn write_adjacency(path: impl AsRef<Path>, g: &WeightedDag) -> Result<(), IoError> {
    write_matrix(path.as_ref(), g.labels(), g.weights())
}

/// Reads an adjacency matrix; the outcome is the last node.
pub fn read_adjacency(path: impl AsRef<Path>) -> Result<WeightedDag, IoError> {
    let path = path.as_ref();
    let (labels, weights) = read_numeric(path)?;
    if weights.nrows() != weights.ncols() {
        return Err(IoError::format(
            path,
            format!("adjacency has {} rows for {} columns", weights.nrows(), weights.ncols()),
        ));
    }
    Ok(WeightedDag::new(weights, labels)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    from: String,
    to: String,
    weight: f64,
}

/// Nonzero edges as `from,to,weight` with node labels.
pub fn write_edges(path: impl AsRef<Path>, g: &WeightedDag) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let labels = g.labels();
    for i in 0..g.dim() {
        for j in 0..g.dim() {
            let weight = g.weight(i, j);
            if weight != 0.0 {
                w.serialize(EdgeRow {
                    from: labels[i].clone(),
                    to: labels[j].clone(),
                    weight,
                })
                .map_err(csv_err(path))?;
            }
        }
    }
    if g.edge_count() == 0 {
        w.write_record(["from", "to", "weight"]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn node_index(labels: &[String], name: &str) -> Result<usize, IoError> {
    labels
        .iter()
        .position(|l| l == name)
        .or_else(|| name.parse::<usize>().ok().filter(|&i| i < labels.len()))
        .ok_or_else(|| IoError::UnknownColumn(name.to_string()))
}

/// Reads an edge list against known node labels (outcome last). Endpoints
/// may be labels or indices.
pub fn read_edges(path: impl AsRef<Path>, labels: &[String]) -> Result<WeightedDag, IoError> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let dim = labels.len();
    let mut weights = DMatrix::zeros(dim, dim);
    for row in rdr.deserialize::<EdgeRow>() {
        let row = row.map_err(csv_err(path))?;
        weights[(node_index(labels, &row.from)?, node_index(labels, &row.to)?)] = row.weight;
    }
    Ok(WeightedDag::new(weights, labels.to_vec())?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CpdagRow {
    from: String,
    to: String,
    kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EdgeKind {
    Directed,
    Undirected,
}

pub fn write_cpdag(path: impl AsRef<Path>, c: &Cpdag) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let labels = c.labels();
    let rows = c
        .directed_edges()
        .into_iter()
        .map(|e| (e, EdgeKind::Directed))
        .chain(c.undirected_edges().into_iter().map(|e| (e, EdgeKind::Undirected)));
    let mut any = false;
    for ((i, j), kind) in rows {
        any = true;
        w.serialize(CpdagRow {
            from: labels[i].clone(),
            to: labels[j].clone(),
            kind,
        })
        .map_err(csv_err(path))?;
    }
    if !any {
        w.write_record(["from", "to", "kind"]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_cpdag(path: impl AsRef<Path>, labels: &[String], outcome: usize) -> Result<Cpdag, IoError> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let mut directed = Vec::new();
    let mut undirected = Vec::new();
    for row in rdr.deserialize::<CpdagRow>() {
        let row = row.map_err(csv_err(path))?;
        let edge = (node_index(labels, &row.from)?, node_index(labels, &row.to)?);
        match row.kind {
            EdgeKind::Directed => directed.push(edge),
            EdgeKind::Undirected => undirected.push(edge),
        }
    }
    Ok(Cpdag::new(labels.to_vec(), outcome, &directed, &undirected)?)
}

/// `node,label,direct_effect,total_effect`; header only when empty.
pub fn write_effects(path: impl AsRef<Path>, report: &EffectReport) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["node", "label", "direct_effect", "total_effect"])
        .map_err(csv_err(path))?;
    for r in &report.records {
        w.write_record([
            r.node.to_string(),
            r.label.clone(),
            r.direct_effect.to_string(),
            r.total_effect.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub node: usize,
    pub label: String,
    pub selected: bool,
}

/// Writes `graph.csv`, `raw_graph.csv`, `selected.csv`, `diagnostics.csv`
/// and `meta.json` into `dir`, creating it if needed.
pub fn write_fit_result(dir: impl AsRef<Path>, fit: &FitResult, meta: &serde_json::Value) -> Result<(), IoError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_adjacency(dir.join("graph.csv"), &fit.graph)?;
    write_adjacency(dir.join("raw_graph.csv"), &fit.raw_graph)?;

    let path = dir.join("selected.csv");
    let mut w = writer(&path)?;
    for node in fit.graph.features() {
        w.serialize(SelectionRow {
            node,
            label: fit.graph.labels()[node].clone(),
            selected: fit.selected[node],
        })
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("diagnostics.csv");
    let mut w = writer(&path)?;
    if fit.diagnostics.is_empty() {
        w.write_record(DIAGNOSTIC_COLUMNS).map_err(csv_err(&path))?;
    }
    for step in &fit.diagnostics {
        w.serialize(step).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    write_json(dir.join("meta.json"), meta)
}

const DIAGNOSTIC_COLUMNS: [&str; 13] = [
    "step",
    "t",
    "f",
    "h1",
    "h2",
    "lambda1",
    "lambda2",
    "c",
    "d",
    "selected",
    "inner_iterations",
    "inner_start",
    "inner_value",
];

/// The pruned graph and selection flags of a fit directory.
pub fn read_fit_result(dir: impl AsRef<Path>) -> Result<(WeightedDag, Vec<bool>), IoError> {
    let dir = dir.as_ref();
    let graph = read_adjacency(dir.join("graph.csv"))?;
    let path = dir.join("selected.csv");
    let mut rdr = reader(&path)?;
    let mut selected = vec![false; graph.dim()];
    for row in rdr.deserialize::<SelectionRow>() {
        let row = row.map_err(csv_err(&path))?;
        if row.node >= graph.dim() || row.node == graph.outcome() {
            return Err(IoError::format(&path, format!("node {} is not a feature", row.node)));
        }
        selected[row.node] = row.selected;
    }
    Ok((graph, selected))
}

pub fn read_diagnostics(path: impl AsRef<Path>) -> Result<Vec<DualStep>, IoError> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    rdr.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

/// Writes `summary.csv` and `raw.csv` into `dir`.
pub fn write_bench_report(dir: impl AsRef<Path>, report: &BenchReport) -> Result<(), IoError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_rows(&dir.join("summary.csv"), &report.rows)?;
    write_rows(&dir.join("raw.csv"), &report.raw)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_replications(path: impl AsRef<Path>) -> Result<Vec<ReplicationRow>, IoError> {
    let path = path.as_ref();
    reader(path)?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err(path))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>, IoError> {
    let path = path.as_ref();
    reader(path)?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err(path))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_column_parsing() {
        assert_eq!("2".parse::<OutcomeColumn>().unwrap(), OutcomeColumn::Index(2));
        assert_eq!("Y".parse::<OutcomeColumn>().unwrap(), OutcomeColumn::Label("Y".into()));
    }

    #[test]
    fn node_lookup_prefers_labels() {
        let labels: Vec<String> = ["1", "A", "Y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(node_index(&labels, "1").unwrap(), 0);
        assert_eq!(node_index(&labels, "2").unwrap(), 2);
        assert!(node_index(&labels, "B").is_err());
    }
}
