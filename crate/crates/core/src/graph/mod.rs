//! Weighted causal graphs over features plus one designated outcome node.
//!
//! A [`WeightedDag`] stores the weighted adjacency matrix `B` with
//! `B[(i, j)]` the weight of the edge `i -> j`. The outcome node may receive
//! edges but never emits them. Acyclicity is *not* enforced at construction
//! time so that raw optimizer iterates and deliberately cyclic test graphs can
//! be represented; operations that need a DAG check it and return
//! [`GraphError::Cyclic`].

mod metrics;
mod random;

pub use metrics::{metrics, EdgeSet, Metrics};
pub use random::{random_er, random_sf, WeightRange};

use nalgebra::DMatrix;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("graph must have at least one node")]
    Empty,
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("outcome index {outcome} out of range for {dim} nodes")]
    OutcomeOutOfRange { outcome: usize, dim: usize },
    #[error("outcome node {outcome} has an outgoing edge to node {target}")]
    OutcomeHasChild { outcome: usize, target: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("non-finite weight at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("graph contains a directed cycle")]
    Cyclic,
    #[error("node {node} out of range for {dim} nodes")]
    NodeOutOfRange { node: usize, dim: usize },
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error("node count mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Weighted adjacency matrix over labeled nodes with a designated outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDag {
    weights: DMatrix<f64>,
    labels: Vec<String>,
    outcome: usize,
}

/// `X0, X1, ..., Y` with the outcome labeled `Y`.
pub fn default_labels(dim: usize, outcome: usize) -> Vec<String> {
    (0..dim)
        .map(|i| if i == outcome { "Y".to_string() } else { format!("X{i}") })
        .collect()
}

impl WeightedDag {
    /// Builds a graph whose outcome is the last node.
    pub fn new(weights: DMatrix<f64>, labels: Vec<String>) -> Result<Self, GraphError> {
        let outcome = weights.nrows().saturating_sub(1);
        Self::with_outcome(weights, labels, outcome)
    }

    pub fn with_outcome(weights: DMatrix<f64>, labels: Vec<String>, outcome: usize) -> Result<Self, GraphError> {
        let (rows, cols) = weights.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(GraphError::Empty);
        }
        if labels.len() != rows {
            return Err(GraphError::LabelCount {
                expected: rows,
                got: labels.len(),
            });
        }
        if outcome >= rows {
            return Err(GraphError::OutcomeOutOfRange { outcome, dim: rows });
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = weights[(i, j)];
                if !w.is_finite() {
                    return Err(GraphError::NonFinite(i, j));
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLoop(i));
                }
                if i == outcome && w != 0.0 {
                    return Err(GraphError::OutcomeHasChild { outcome, target: j });
                }
            }
        }
        Ok(Self {
            weights,
            labels,
            outcome,
        })
    }

    /// Builds a graph with default labels and the outcome last.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self, GraphError> {
        let dim = weights.nrows();
        Self::new(weights, default_labels(dim, dim.saturating_sub(1)))
    }

    /// Graph with `dim` nodes and no edges.
    pub fn empty(dim: usize) -> Result<Self, GraphError> {
        Self::from_weights(DMatrix::zeros(dim, dim))
    }

    /// Builds a graph from `(from, to, weight)` triples, outcome last.
    pub fn from_edges(dim: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self, GraphError> {
        let mut weights = DMatrix::zeros(dim, dim);
        for (i, j, w) in edges {
            if i >= dim || j >= dim {
                return Err(GraphError::NodeOutOfRange { node: i.max(j), dim });
            }
            weights[(i, j)] = w;
        }
        Self::from_weights(weights)
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[(from, to)]
    }

    /// Indices of all nodes except the outcome, in index order.
    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(move |&i| i != self.outcome)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.weights[(from, to)] != 0.0
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&k| self.has_edge(k, node)).collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&k| self.has_edge(node, k)).collect()
    }

    pub(crate) fn check_node(&self, node: usize) -> Result<(), GraphError> {
        if node < self.dim() {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange { node, dim: self.dim() })
        }
    }

    /// Kahn topological order (smallest ready index first); `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        topological_order(&self.weights)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    pub(crate) fn require_acyclic(&self) -> Result<Vec<usize>, GraphError> {
        self.topological_order().ok_or(GraphError::Cyclic)
    }

    /// Proper ancestors of `node` (nodes with a directed path into it).
    pub fn ancestors(&self, node: usize) -> Vec<bool> {
        let dim = self.dim();
        let mut seen = vec![false; dim];
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            for p in 0..dim {
                if self.has_edge(p, v) && !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Every directed path from `source` ending at the outcome, by DFS.
    pub fn enumerate_paths_to_outcome(&self, source: usize) -> Result<Vec<Vec<usize>>, GraphError> {
        self.check_node(source)?;
        if source == self.outcome {
            return Err(GraphError::InvalidParameter(
                "path source must differ from the outcome".into(),
            ));
        }
        self.require_acyclic()?;
        let mut paths = Vec::new();
        let mut current = vec![source];
        self.extend_paths(&mut current, &mut paths);
        Ok(paths)
    }

    fn extend_paths(&self, current: &mut Vec<usize>, paths: &mut Vec<Vec<usize>>) {
        let last = *current.last().expect("path is never empty");
        if last == self.outcome {
            paths.push(current.clone());
            return;
        }
        for next in 0..self.dim() {
            if self.has_edge(last, next) {
                current.push(next);
                self.extend_paths(current, paths);
                current.pop();
            }
        }
    }

    /// Zeroes every weight with `|b| <= threshold`; survivors are kept bit-exact.
    pub fn prune(&self, threshold: f64) -> WeightedDag {
        let weights = self.weights.map(|w| if w.abs() > threshold { w } else { 0.0 });
        WeightedDag {
            weights,
            labels: self.labels.clone(),
            outcome: self.outcome,
        }
    }

    /// Copy with every edge touching a node outside `keep` removed.
    pub fn restrict(&self, keep: &[bool]) -> WeightedDag {
        let mut weights = self.weights.clone();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if !keep[i] || !keep[j] {
                    weights[(i, j)] = 0.0;
                }
            }
        }
        WeightedDag {
            weights,
            labels: self.labels.clone(),
            outcome: self.outcome,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, GraphError> {
        if labels.len() != self.dim() {
            return Err(GraphError::LabelCount {
                expected: self.dim(),
                got: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn edge_set(&self, threshold: f64) -> EdgeSet {
        EdgeSet::from_dag(self, threshold)
    }
}

/// Kahn's algorithm over the nonzero pattern of a square matrix.
pub fn topological_order(weights: &DMatrix<f64>) -> Option<Vec<usize>> {
    let dim = weights.nrows();
    let mut indegree: Vec<usize> = (0..dim)
        .map(|j| (0..dim).filter(|&i| weights[(i, j)] != 0.0).count())
        .collect();
    let mut ready: VecDeque<usize> = (0..dim).filter(|&j| indegree[j] == 0).collect();
    let mut order = Vec::with_capacity(dim);
    while let Some(v) = ready.pop_front() {
        order.push(v);
        for j in 0..dim {
            if weights[(v, j)] != 0.0 {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push_back(j);
                }
            }
        }
    }
    (order.len() == dim).then_some(order)
}

pub fn is_acyclic_matrix(weights: &DMatrix<f64>) -> bool {
    topological_order(weights).is_some()
}
