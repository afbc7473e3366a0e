//! Adam with plateau step halving, restricted to a fixed set of free entries.

use super::{InnerSchedule, OptimizerError};
use nalgebra::DMatrix;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub(crate) struct InnerOutcome {
    pub b: DMatrix<f64>,
    pub value: f64,
    pub start_value: f64,
    pub iterations: usize,
}

/// Minimizes `objective` over matrices supported on `free` (entries 0/1),
/// starting from `start` projected onto that support. Returns the best point
/// evaluated, so the result never exceeds the starting value.
pub(crate) fn minimize<F>(
    mut objective: F,
    start: &DMatrix<f64>,
    free: &DMatrix<f64>,
    schedule: &InnerSchedule,
) -> Result<InnerOutcome, OptimizerError>
where
    F: FnMut(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>), OptimizerError>,
{
    let mut x = start.component_mul(free);
    let (mut rows, cols) = x.shape();
    rows = rows.max(1);
    let mut m = DMatrix::zeros(rows, cols);
    let mut v = DMatrix::zeros(rows, cols);
    let mut lr = schedule.step_size;
    let min_lr = schedule.step_size * schedule.min_step_ratio;

    let (start_value, _) = objective(&x)?;
    if !start_value.is_finite() {
        return Err(OptimizerError::NonFiniteObjective);
    }
    let mut best = x.clone();
    let mut best_value = start_value;
    let mut checkpoint = start_value;
    let mut steps_since_reset = 0usize;
    let mut iterations = 0;

    while iterations < schedule.max_iterations {
        let (value, grad) = objective(&x)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(OptimizerError::NonFiniteObjective);
        }
        if value < best_value {
            best_value = value;
            best.copy_from(&x);
        }
        let grad = grad.component_mul(free);
        if grad.amax() <= schedule.gradient_tolerance {
            break;
        }
        iterations += 1;
        steps_since_reset += 1;

        m = &m * BETA1 + &grad * (1.0 - BETA1);
        v = &v * BETA2 + grad.component_mul(&grad) * (1.0 - BETA2);
        let k = steps_since_reset as i32;
        let m_scale = 1.0 / (1.0 - BETA1.powi(k));
        let v_scale = 1.0 / (1.0 - BETA2.powi(k));
        x.zip_zip_apply(&m, &v, |xi, mi, vi| {
            *xi -= lr * (mi * m_scale) / ((vi * v_scale).sqrt() + EPS);
        });
        x.component_mul_assign(free);

        // A window without meaningful progress on the best value means the
        // iterate is bouncing at the resolution of the current step: restart
        // from the best point with half the step.
        if iterations % schedule.patience == 0 {
            let required = schedule.relative_improvement * checkpoint.abs().max(1e-12);
            if checkpoint - best_value <= required {
                lr *= 0.5;
                if lr < min_lr {
                    break;
                }
                x.copy_from(&best);
                m.fill(0.0);
                v.fill(0.0);
                steps_since_reset = 0;
            }
            checkpoint = best_value;
        }
    }
    let (final_value, _) = objective(&x)?;
    if final_value.is_finite() && final_value < best_value {
        best_value = final_value;
        best = x;
    }
    Ok(InnerOutcome {
        b: best,
        value: best_value,
        start_value,
        iterations,
    })
}
