//! Smooth pieces of the learning objective: least-squares loss, the trace
//! acyclicity function `h1` and the causal-relevance constraint `h2`.

use super::OptimizerError;
use crate::effects::{EffectKind, EffectOperator};
use crate::scm::Dataset;
use nalgebra::{DMatrix, DVector};

fn check_square(b: &DMatrix<f64>) -> Result<usize, OptimizerError> {
    if b.nrows() != b.ncols() || b.nrows() == 0 {
        return Err(OptimizerError::Shape(format!(
            "weight matrix is {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(b.nrows())
}

fn check_mask(mask: &[bool], dim: usize, outcome: usize) -> Result<(), OptimizerError> {
    if mask.len() != dim {
        return Err(OptimizerError::Shape(format!(
            "mask has {} entries for {dim} nodes",
            mask.len()
        )));
    }
    if !mask[outcome] {
        return Err(OptimizerError::Shape("mask must include the outcome".into()));
    }
    Ok(())
}

/// Zeroes rows and columns of nodes outside `mask`.
pub(crate) fn restrict_matrix(b: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    DMatrix::from_fn(
        b.nrows(),
        b.ncols(),
        |i, j| if mask[i] && mask[j] { b[(i, j)] } else { 0.0 },
    )
}

/// `1` on entries the optimizer may move: off-diagonal, inside the mask,
/// and not in the outcome row.
pub(crate) fn free_entries(dim: usize, mask: &[bool], outcome: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i != j && i != outcome && mask[i] && mask[j] {
            1.0
        } else {
            0.0
        }
    })
}

/// `(1/2n)·‖X_M − (X B)_M‖²_F` over the masked columns `M` of the raw data
/// matrix, with the gradient `−(1/n)·Xᵀ(X − XB)` on free entries.
pub fn least_squares_loss(
    b: &DMatrix<f64>,
    data: &Dataset,
    mask: &[bool],
) -> Result<(f64, DMatrix<f64>), OptimizerError> {
    let dim = check_square(b)?;
    if data.dim() != dim {
        return Err(OptimizerError::Shape(format!(
            "data has {} columns, matrix is {dim}x{dim}",
            data.dim()
        )));
    }
    check_mask(mask, dim, data.outcome())?;
    if data.n() == 0 {
        return Err(OptimizerError::EmptyData);
    }
    let b = restrict_matrix(b, mask);
    let x = data.values();
    let n = x.nrows() as f64;
    let mut residual = x - x * &b;
    for j in 0..dim {
        if !mask[j] {
            residual.column_mut(j).fill(0.0);
        }
    }
    let loss = 0.5 * residual.norm_squared() / n;
    let grad = (x.transpose() * residual / -n).component_mul(&free_entries(dim, mask, data.outcome()));
    Ok((loss, grad))
}

/// The same loss expressed through a second-moment matrix `S = XᵀX/n`:
/// `½ Σ_{j∈M} (e_j − B e_j)ᵀ S (e_j − B e_j)`.
pub(crate) fn covariance_loss(b: &DMatrix<f64>, s: &DMatrix<f64>, mask: &[bool]) -> (f64, DMatrix<f64>) {
    let dim = b.nrows();
    let r = DMatrix::identity(dim, dim) - b;
    let sr = s * &r;
    let mut loss = 0.0;
    for j in 0..dim {
        if mask[j] {
            loss += r.column(j).dot(&sr.column(j));
        }
    }
    (0.5 * loss, -sr)
}

fn matrix_power(base: &DMatrix<f64>, mut exp: usize) -> DMatrix<f64> {
    let dim = base.nrows();
    let mut result = DMatrix::identity(dim, dim);
    let mut square = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            result = &result * &square;
        }
        exp >>= 1;
        if exp > 0 {
            square = &square * &square;
        }
    }
    result
}

/// `h1(B) = tr[(I + t B∘B)^D] − D` with `D = dim`, and its gradient
/// `D·t·[(I + t B∘B)^{D−1}]ᵀ ∘ 2B`.
pub fn acyclicity(b: &DMatrix<f64>, t: f64) -> Result<(f64, DMatrix<f64>), OptimizerError> {
    let dim = check_square(b)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(OptimizerError::InvalidConfig(format!(
            "acyclicity scale t = {t} must be positive"
        )));
    }
    let m = DMatrix::identity(dim, dim) + b.component_mul(b) * t;
    let p = matrix_power(&m, dim - 1);
    let full = &p * &m;
    let value = full.trace() - dim as f64;
    let grad = p.transpose().component_mul(b) * (2.0 * t * dim as f64);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(OptimizerError::NonFiniteAcyclicity);
    }
    Ok((value.max(0.0), grad))
}

pub fn acyclicity_value(b: &DMatrix<f64>, t: f64) -> Result<f64, OptimizerError> {
    acyclicity(b, t).map(|(v, _)| v)
}

pub fn acyclicity_gradient(b: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, OptimizerError> {
    acyclicity(b, t).map(|(_, g)| g)
}

/// `h2(B; g) = δ* − Σ_{i∈g} |CE_i(B)| + Σ_j |b[y][j]|` with a subgradient
/// (`sign(0) = 0`). Effects are evaluated on `B` restricted to the mask.
pub fn relevance_constraint(
    b: &DMatrix<f64>,
    mask: &[bool],
    outcome: usize,
    kind: EffectKind,
    delta_star: f64,
) -> Result<(f64, DMatrix<f64>), OptimizerError> {
    let dim = check_square(b)?;
    check_mask(mask, dim, outcome)?;
    let restricted = restrict_matrix(b, mask);
    let op = EffectOperator::new(&restricted, outcome, kind)?;
    let ce = op.values();
    let mut value = delta_star;
    let mut signs = DVector::zeros(dim);
    for i in 0..dim {
        if i != outcome && mask[i] {
            value -= ce[i].abs();
            signs[i] = ce[i].signum() * (ce[i] != 0.0) as u8 as f64;
        }
    }
    let mut grad = -op.weighted_gradient(&signs);
    for j in 0..dim {
        let w = b[(outcome, j)];
        value += w.abs();
        grad[(outcome, j)] += if w == 0.0 { 0.0 } else { w.signum() };
    }
    for i in 0..dim {
        for j in 0..dim {
            if !mask[i] || !mask[j] {
                grad[(i, j)] = 0.0;
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(dim: usize, seed: u64, outcome_row_zero: bool) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(dim, dim, |i, j| {
            if i == j || (outcome_row_zero && i == dim - 1) {
                0.0
            } else {
                rng.random_range(-0.6..0.6)
            }
        })
    }

    fn central_difference(f: impl Fn(&DMatrix<f64>) -> f64, b: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| {
            let mut plus = b.clone();
            plus[(i, j)] += h;
            let mut minus = b.clone();
            minus[(i, j)] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
    }

    #[test]
    fn acyclicity_examples() {
        assert_eq!(acyclicity_value(&DMatrix::zeros(4, 4), 0.3).unwrap(), 0.0);
        let two_cycle = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((acyclicity_value(&two_cycle, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let upper = DMatrix::from_fn(5, 5, |i, j| if i < j { 1.5 } else { 0.0 });
        assert_eq!(acyclicity_value(&upper, 0.5).unwrap(), 0.0);
        assert_eq!(
            acyclicity_gradient(&DMatrix::zeros(3, 3), 1.0).unwrap(),
            DMatrix::zeros(3, 3)
        );
    }

    #[test]
    fn acyclicity_gradient_matches_finite_differences() {
        for seed in 0..10 {
            let b = random_matrix(5, seed, false);
            let fd = central_difference(|m| acyclicity_value(m, 0.4).unwrap(), &b, 1e-6);
            let analytic = acyclicity_gradient(&b, 0.4).unwrap();
            assert!((fd - analytic).amax() < 1e-5);
        }
    }

    fn small_dataset(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        Dataset::new(values, crate::graph::default_labels(4, 3), 3).unwrap()
    }

    #[test]
    fn loss_examples() {
        let data = small_dataset(1);
        let mask = vec![true; 4];
        let (zero_loss, _) = least_squares_loss(&DMatrix::zeros(4, 4), &data, &mask).unwrap();
        let expected = 0.5 * data.values().norm_squared() / 30.0;
        assert!((zero_loss - expected).abs() < 1e-12);

        // x1 = 2 x0 exactly
        let x0: Vec<f64> = (0..10).map(|k| k as f64 - 4.0).collect();
        let mut values = DMatrix::zeros(10, 2);
        for (r, v) in x0.iter().enumerate() {
            values[(r, 0)] = *v;
            values[(r, 1)] = 2.0 * v;
        }
        let chain = Dataset::new(values, crate::graph::default_labels(2, 1), 1).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        let (loss, grad) = least_squares_loss(&b, &chain, &[true, true]).unwrap();
        // Only the root column is left unexplained.
        let root = 0.5 * x0.iter().map(|v| v * v).sum::<f64>() / 10.0;
        assert!((loss - root).abs() < 1e-12);
        assert!(grad[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for seed in 0..10 {
            let data = small_dataset(seed);
            let mut mask = vec![true; 4];
            mask[(seed % 3) as usize] = seed % 2 == 0;
            let b = random_matrix(4, seed + 100, true);
            let (_, analytic) = least_squares_loss(&b, &data, &mask).unwrap();
            let fd = central_difference(|m| least_squares_loss(m, &data, &mask).unwrap().0, &b, 1e-6);
            let free = free_entries(4, &mask, 3);
            assert!((fd.component_mul(&free) - analytic).amax() < 1e-5);
        }
    }

    #[test]
    fn covariance_loss_matches_data_loss() {
        let data = small_dataset(4);
        let s = data.values().transpose() * data.values() / data.n() as f64;
        let b = random_matrix(4, 9, true);
        let mask = vec![true, false, true, true];
        let (direct, g1) = least_squares_loss(&b, &data, &mask).unwrap();
        let (via_cov, g2) = covariance_loss(&restrict_matrix(&b, &mask), &s, &mask);
        assert!((direct - via_cov).abs() < 1e-12);
        let free = free_entries(4, &mask, 3);
        assert!((g1 - g2.component_mul(&free)).amax() < 1e-12);
    }

    #[test]
    fn relevance_examples() {
        let chain = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let all = vec![true; 3];
        let (v, _) = relevance_constraint(&chain, &all, 2, EffectKind::Total, 2.0).unwrap();
        assert!(v.abs() < 1e-12);
        let none = vec![false, false, true];
        let (v, _) = relevance_constraint(&chain, &none, 2, EffectKind::Total, 2.0).unwrap();
        assert_eq!(v, 2.0);
        let (v, _) = relevance_constraint(&chain, &all, 2, EffectKind::Direct, 1.0).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn relevance_gradient_matches_finite_differences() {
        for kind in [EffectKind::Total, EffectKind::Direct] {
            for seed in 0..10 {
                let b = random_matrix(6, seed, true) * 0.5;
                let mask = vec![true; 6];
                let (_, analytic) = relevance_constraint(&b, &mask, 5, kind, 1.0).unwrap();
                let fd = central_difference(|m| relevance_constraint(m, &mask, 5, kind, 1.0).unwrap().0, &b, 1e-6);
                let free = free_entries(6, &mask, 5);
                assert!((fd.component_mul(&free) - analytic.component_mul(&free)).amax() < 1e-5);
            }
        }
    }
}
