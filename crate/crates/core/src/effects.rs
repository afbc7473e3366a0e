//! Direct and total effects of features on the outcome under the linear SEM.
//!
//! `DE_i = b[i][y]`; `TE_i` is the sum over directed paths `i → … → y` of the
//! product of edge weights, computed as column `y` of `(I − B)^{-1} − I`.

use crate::graph::{GraphError, WeightedDag};
use crate::scm::Dataset;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EffectError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {0} is the outcome; effects are defined for features only")]
    OutcomeNode(usize),
    #[error("I - B is numerically singular; reduce the inner step size")]
    Singular,
    #[error("effect evaluation produced a non-finite value")]
    NonFinite,
}

/// Which causal effect drives selection and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum EffectKind {
    #[default]
    #[serde(rename = "te", alias = "TE", alias = "total")]
    Total,
    #[serde(rename = "de", alias = "DE", alias = "direct")]
    Direct,
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectKind::Total => "te",
            EffectKind::Direct => "de",
        })
    }
}

fn check_feature(g: &WeightedDag, i: usize) -> Result<(), EffectError> {
    g.check_node(i)?;
    if i == g.outcome() {
        return Err(EffectError::OutcomeNode(i));
    }
    Ok(())
}

pub fn direct_effect(g: &WeightedDag, i: usize) -> Result<f64, EffectError> {
    check_feature(g, i)?;
    Ok(g.weight(i, g.outcome()))
}

pub fn total_effect(g: &WeightedDag, i: usize) -> Result<f64, EffectError> {
    check_feature(g, i)?;
    Ok(total_effects(g)?[i])
}

/// Total effect of every node on the outcome; the outcome entry is 0.
pub fn total_effects(g: &WeightedDag) -> Result<Vec<f64>, EffectError> {
    // Solve (I − B) x = e_y by substitution in reverse topological order;
    // x_i − [i = y] is the total effect of i.
    let order = g.require_acyclic()?;
    let y = g.outcome();
    let mut x = vec![0.0; g.dim()];
    for &i in order.iter().rev() {
        x[i] = if i == y {
            1.0
        } else {
            g.children(i).iter().map(|&j| g.weight(i, j) * x[j]).sum()
        };
    }
    x[y] = 0.0;
    Ok(x)
}

/// Total effect by explicit path enumeration. Exponential in the worst case;
/// kept as an oracle for the closed form.
pub fn total_effect_by_paths(g: &WeightedDag, i: usize) -> Result<f64, EffectError> {
    check_feature(g, i)?;
    let paths = g.enumerate_paths_to_outcome(i)?;
    Ok(paths
        .iter()
        .map(|p| p.windows(2).map(|e| g.weight(e[0], e[1])).product::<f64>())
        .sum())
}

/// Effects of the requested kind for every node; the outcome entry is 0.
pub fn causal_effects(g: &WeightedDag, kind: EffectKind) -> Result<Vec<f64>, EffectError> {
    match kind {
        EffectKind::Total => total_effects(g),
        EffectKind::Direct => {
            let y = g.outcome();
            Ok((0..g.dim())
                .map(|i| if i == y { 0.0 } else { g.weight(i, y) })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub node: usize,
    pub label: String,
    pub direct_effect: f64,
    pub total_effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub records: Vec<EffectRecord>,
    pub outcome: usize,
    /// Free-form note on the graph the effects were computed from.
    pub source: String,
}

/// One record per non-outcome node.
pub fn effect_report(g: &WeightedDag) -> Result<EffectReport, EffectError> {
    let te = total_effects(g)?;
    let y = g.outcome();
    let records = g
        .features()
        .map(|i| EffectRecord {
            node: i,
            label: g.labels()[i].clone(),
            direct_effect: g.weight(i, y),
            total_effect: te[i],
        })
        .collect();
    Ok(EffectReport {
        records,
        outcome: y,
        source: String::new(),
    })
}

/// Reference score: `Σ_i |CE_i|` over all features of the graph returned by
/// `fit`, which is expected to be the pruned selection-free fit of `data`.
pub fn delta_star<F, E>(data: &Dataset, kind: EffectKind, fit: F) -> Result<f64, E>
where
    F: FnOnce(&Dataset) -> Result<WeightedDag, E>,
    E: From<EffectError>,
{
    let g = fit(data)?;
    let effects = causal_effects(&g, kind)?;
    Ok(effects.iter().map(|e| e.abs()).sum())
}

/// Spectral radius of a square matrix. Falls back to the Frobenius norm, an
/// upper bound, if the Schur iteration does not converge.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match nalgebra::linalg::Schur::try_new(m.clone(), 1e-12, 10_000) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => m.norm(),
    }
}

/// Spectral radius below which `(I − B)^{-1}` is used directly.
pub const NEUMANN_GUARD: f64 = 0.99;

#[derive(Debug, Clone)]
enum Repr {
    Direct,
    /// `(I − B)^{-1}`.
    Inverse(DMatrix<f64>),
    /// `B^0, …, B^K` with `K = dim − 1`.
    Neumann(Vec<DMatrix<f64>>),
}

/// Effects of every node on the outcome for an arbitrary weight matrix,
/// together with gradients of weighted effect sums. Iterates mid-optimization
/// are only approximately acyclic: when `ρ(B) ≥ 0.99` the total effect is the
/// truncated series `Σ_{k=1}^{dim−1} B^k`, which is exact on acyclic patterns.
#[derive(Debug, Clone)]
pub struct EffectOperator {
    outcome: usize,
    dim: usize,
    values: DVector<f64>,
    repr: Repr,
}

impl EffectOperator {
    pub fn new(b: &DMatrix<f64>, outcome: usize, kind: EffectKind) -> Result<Self, EffectError> {
        if kind == EffectKind::Total && spectral_radius(b) >= NEUMANN_GUARD {
            return Self::neumann(b, outcome);
        }
        Self::closed_form(b, outcome, kind)
    }

    fn closed_form(b: &DMatrix<f64>, outcome: usize, kind: EffectKind) -> Result<Self, EffectError> {
        let dim = b.nrows();
        let (values, repr) = match kind {
            EffectKind::Direct => (b.column(outcome).into_owned(), Repr::Direct),
            EffectKind::Total => {
                let m = (DMatrix::identity(dim, dim) - b)
                    .try_inverse()
                    .ok_or(EffectError::Singular)?;
                (m.column(outcome).into_owned(), Repr::Inverse(m))
            }
        };
        Self::finish(values, repr, outcome, dim)
    }

    fn neumann(b: &DMatrix<f64>, outcome: usize) -> Result<Self, EffectError> {
        let dim = b.nrows();
        let mut powers = vec![DMatrix::identity(dim, dim)];
        let mut values = DVector::zeros(dim);
        for k in 1..dim.max(1) {
            let next = &powers[k - 1] * b;
            values += next.column(outcome);
            powers.push(next);
        }
        Self::finish(values, Repr::Neumann(powers), outcome, dim)
    }

    fn finish(mut values: DVector<f64>, repr: Repr, outcome: usize, dim: usize) -> Result<Self, EffectError> {
        values[outcome] = 0.0;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EffectError::NonFinite);
        }
        Ok(Self {
            outcome,
            dim,
            values,
            repr,
        })
    }

    /// Effect of each node; the outcome entry is 0.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// True when the truncated series was used instead of the inverse.
    pub fn used_series(&self) -> bool {
        matches!(self.repr, Repr::Neumann(_))
    }

    /// Gradient with respect to `B` of `Σ_i coeffs[i]·CE_i(B)`; the outcome
    /// coefficient is ignored.
    pub fn weighted_gradient(&self, coeffs: &DVector<f64>) -> DMatrix<f64> {
        let y = self.outcome;
        let mut c = coeffs.clone();
        c[y] = 0.0;
        match &self.repr {
            Repr::Direct => {
                let mut g = DMatrix::zeros(self.dim, self.dim);
                g.set_column(y, &c);
                g
            }
            // d M[i][y] / d B[a][b] = M[i][a] M[b][y]
            Repr::Inverse(m) => {
                let u = m.transpose() * &c;
                let v = m.column(y).into_owned();
                u * v.transpose()
            }
            // d (B^k)[i][y] / d B[a][b] = Σ_{j+m=k−1} (B^j)[i][a] (B^m)[b][y]
            Repr::Neumann(powers) => {
                let k_max = powers.len() - 1;
                let mut g = DMatrix::zeros(self.dim, self.dim);
                if k_max == 0 {
                    return g;
                }
                let vs: Vec<DVector<f64>> = powers[..k_max].iter().map(|p| p.column(y).into_owned()).collect();
                let mut tail = DVector::zeros(self.dim);
                let mut cumulative = Vec::with_capacity(k_max);
                for v in &vs {
                    tail += v;
                    cumulative.push(tail.clone());
                }
                for j in 0..k_max {
                    let u = powers[j].transpose() * &c;
                    g += u * cumulative[k_max - 1 - j].transpose();
                }
                g
            }
        }
    }
}
