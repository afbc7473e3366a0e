//! Structural equation samplers: the linear model `X = Bᵀ X + ε` and the
//! rounded-log variant `X_i = round(2 ln(Σ_k b_ki X_k + 1)) + ε_i`.
//!
//! Noise for node `i` is drawn from its own ChaCha stream, so a column depends
//! only on the noise of its ancestors.

use crate::graph::{GraphError, WeightedDag};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("link mismatch: expected {expected:?}, spec uses {found:?}")]
    LinkMismatch { expected: Link, found: Link },
    #[error("parent aggregate {value} of node {node} ({label}) is outside the log domain")]
    LogDomain { node: usize, label: String, value: f64 },
    #[error("noise matrix is {rows}x{cols}, expected n x {dim}")]
    NoiseShape { rows: usize, cols: usize, dim: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("dataset shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    /// Independent `{0, 1}` draws with `P(1) = p`.
    Bernoulli { p: f64 },
    /// Zero-mean Gaussian. Without equal variance, node scales are drawn
    /// uniformly from `[0.5 σ, 1.5 σ]` using the sampling seed.
    Gaussian { sigma: f64, equal_variance: bool },
}

impl Default for Noise {
    fn default() -> Self {
        Noise::Bernoulli { p: 0.5 }
    }
}

impl Noise {
    pub fn validate(&self) -> Result<(), ScmError> {
        match *self {
            Noise::Bernoulli { p } if !(p > 0.0 && p < 1.0) => {
                Err(ScmError::InvalidNoise(format!("bernoulli p = {p} must lie in (0, 1)")))
            }
            Noise::Gaussian { sigma, .. } if !(sigma > 0.0 && sigma.is_finite()) => Err(ScmError::InvalidNoise(
                format!("gaussian sigma = {sigma} must be positive"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Linear,
    /// `ψ(x) = round(2 ln(x + 1))`, ties away from zero.
    RoundedLog,
}

/// Generative model: graph, noise law and link function.
#[derive(Debug, Clone, PartialEq)]
pub struct SemSpec {
    pub graph: WeightedDag,
    pub noise: Noise,
    pub link: Link,
}

impl SemSpec {
    pub fn new(graph: WeightedDag, noise: Noise, link: Link) -> Result<Self, ScmError> {
        noise.validate()?;
        if !graph.is_acyclic() {
            return Err(GraphError::Cyclic.into());
        }
        Ok(Self { graph, noise, link })
    }

    pub fn linear(graph: WeightedDag, noise: Noise) -> Result<Self, ScmError> {
        Self::new(graph, noise, Link::Linear)
    }
}

/// `n × (d+1)` observations with column labels and an outcome column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    labels: Vec<String>,
    outcome: usize,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>, outcome: usize) -> Result<Self, ScmError> {
        if labels.len() != values.ncols() {
            return Err(ScmError::Shape(format!(
                "{} labels for {} columns",
                labels.len(),
                values.ncols()
            )));
        }
        if outcome >= values.ncols() {
            return Err(ScmError::Shape(format!(
                "outcome column {outcome} out of range for {} columns",
                values.ncols()
            )));
        }
        for col in 0..values.ncols() {
            for row in 0..values.nrows() {
                if !values[(row, col)].is_finite() {
                    return Err(ScmError::NonFinite { row, col });
                }
            }
        }
        Ok(Self {
            values,
            labels,
            outcome,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of columns, features plus outcome.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.values.column(col).iter().copied().collect()
    }

    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(move |&i| i != self.outcome)
    }
}

/// Draws the `n × dim` noise matrix, one independent stream per node.
pub fn sample_noise(spec: &SemSpec, n: usize, seed: u64) -> Result<DMatrix<f64>, ScmError> {
    spec.noise.validate()?;
    let dim = spec.graph.dim();
    let mut noise = DMatrix::zeros(n, dim);
    let scales = match spec.noise {
        Noise::Gaussian {
            sigma,
            equal_variance: false,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(dim as u64);
            (0..dim).map(|_| sigma * rng.random_range(0.5..=1.5)).collect()
        }
        Noise::Gaussian {
            sigma,
            equal_variance: true,
        } => vec![sigma; dim],
        Noise::Bernoulli { .. } => vec![1.0; dim],
    };
    for node in 0..dim {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(node as u64);
        match spec.noise {
            Noise::Bernoulli { p } => {
                let dist = Bernoulli::new(p).map_err(|e| ScmError::InvalidNoise(e.to_string()))?;
                for row in 0..n {
                    noise[(row, node)] = if dist.sample(&mut rng) { 1.0 } else { 0.0 };
                }
            }
            Noise::Gaussian { .. } => {
                let dist = Normal::new(0.0, scales[node]).map_err(|e| ScmError::InvalidNoise(e.to_string()))?;
                for row in 0..n {
                    noise[(row, node)] = dist.sample(&mut rng);
                }
            }
        }
    }
    Ok(noise)
}

/// `round(2 ln(x + 1))` with ties away from zero; `None` outside the domain.
pub fn rounded_log(x: f64) -> Option<f64> {
    if x <= -1.0 + 1e-12 {
        None
    } else {
        Some((2.0 * (x + 1.0).ln()).round())
    }
}

/// Pushes a given noise matrix through the structural equations in
/// topological order.
pub fn propagate(spec: &SemSpec, noise: &DMatrix<f64>) -> Result<Dataset, ScmError> {
    let g = &spec.graph;
    let dim = g.dim();
    if noise.ncols() != dim {
        return Err(ScmError::NoiseShape {
            rows: noise.nrows(),
            cols: noise.ncols(),
            dim,
        });
    }
    let order = g.require_acyclic()?;
    let n = noise.nrows();
    let mut values = DMatrix::zeros(n, dim);
    for &node in &order {
        let parents = g.parents(node);
        for row in 0..n {
            let mut aggregate = 0.0;
            for &p in &parents {
                aggregate += g.weight(p, node) * values[(row, p)];
            }
            let signal = match spec.link {
                Link::Linear => aggregate,
                Link::RoundedLog if parents.is_empty() => 0.0,
                Link::RoundedLog => rounded_log(aggregate).ok_or_else(|| ScmError::LogDomain {
                    node,
                    label: g.labels()[node].clone(),
                    value: aggregate,
                })?,
            };
            values[(row, node)] = signal + noise[(row, node)];
        }
    }
    Dataset::new(values, g.labels().to_vec(), g.outcome())
}

pub fn sample(spec: &SemSpec, n: usize, seed: u64) -> Result<Dataset, ScmError> {
    let noise = sample_noise(spec, n, seed)?;
    propagate(spec, &noise)
}

pub fn sample_linear(spec: &SemSpec, n: usize, seed: u64) -> Result<Dataset, ScmError> {
    if spec.link != Link::Linear {
        return Err(ScmError::LinkMismatch {
            expected: Link::Linear,
            found: spec.link,
        });
    }
    sample(spec, n, seed)
}

pub fn sample_nonlinear(spec: &SemSpec, n: usize, seed: u64) -> Result<Dataset, ScmError> {
    if spec.link != Link::RoundedLog {
        return Err(ScmError::LinkMismatch {
            expected: Link::RoundedLog,
            found: spec.link,
        });
    }
    sample(spec, n, seed)
}

/// Shifts the outcome column by its minimum when that minimum is negative.
pub fn shift_nonnegative(data: &Dataset) -> Dataset {
    let y = data.outcome;
    let min = data.values.column(y).min();
    if data.n() == 0 || min >= 0.0 {
        return data.clone();
    }
    let mut shifted = data.clone();
    for row in 0..data.n() {
        shifted.values[(row, y)] -= min;
    }
    shifted
}
