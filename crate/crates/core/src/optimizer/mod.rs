//! Constrained least-squares structure learning with joint feature selection.
//!
//! The objective is
//! `f(B) + λ1·h1(B) + λ2·h2(B; g) + c·h1(B)² + d·h2(B; g)²`, minimized by
//! dual ascent over `(λ1, λ2)` with growing penalties `(c, d)`. Each dual step
//! runs Adam on the weights; the feature mask `g` shrinks between dual steps,
//! dropping features whose effect on the outcome in the thresholded iterate
//! is negligible.

mod adam;
mod objective;

pub use objective::{acyclicity, acyclicity_gradient, acyclicity_value, least_squares_loss, relevance_constraint};

use crate::effects::{self, EffectError, EffectKind, EffectOperator};
use crate::graph::{GraphError, WeightedDag};
use crate::scm::{shift_nonnegative, Dataset};
use nalgebra::DMatrix;
use objective::{covariance_loss, free_entries, restrict_matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dataset has no observations")]
    EmptyData,
    #[error("acyclicity function overflowed; use a smaller t")]
    NonFiniteAcyclicity,
    #[error("objective became non-finite")]
    NonFiniteObjective,
    #[error("iterate diverged at dual step {step}; last trace entries: {trace:?}")]
    Diverged { step: usize, trace: Vec<DualStep> },
    #[error(transparent)]
    Effect(#[from] EffectError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Augmented-Lagrangian schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualSchedule {
    pub lambda1_init: f64,
    pub lambda2_init: f64,
    pub c_init: f64,
    pub d_init: f64,
    /// Penalty multiplier applied when a constraint fails to shrink enough.
    pub growth: f64,
    /// A penalty grows unless its constraint fell below this fraction of the
    /// previous value.
    pub progress_ratio: f64,
    pub max_steps: usize,
    /// Tolerance on `h1`.
    pub tolerance: f64,
    /// Tolerance on `|h2|`.
    pub relevance_tolerance: f64,
    pub penalty_cap: f64,
}

impl Default for DualSchedule {
    fn default() -> Self {
        Self {
            lambda1_init: 0.0,
            lambda2_init: 0.0,
            c_init: 1.0,
            d_init: 1.0,
            growth: 10.0,
            progress_ratio: 0.25,
            max_steps: 100,
            tolerance: 1e-8,
            relevance_tolerance: 1e-6,
            penalty_cap: 1e16,
        }
    }
}

/// Adam settings for each inner minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerSchedule {
    pub step_size: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Iterations between plateau checks.
    pub patience: usize,
    /// Minimum relative decrease of the best value per plateau window;
    /// otherwise the step size is halved and the iterate reset to the best.
    pub relative_improvement: f64,
    /// The solve stops once the step size falls below this fraction of
    /// `step_size`.
    pub min_step_ratio: f64,
}

impl Default for InnerSchedule {
    fn default() -> Self {
        Self {
            step_size: 0.02,
            max_iterations: 3000,
            gradient_tolerance: 1e-10,
            patience: 50,
            relative_improvement: 1e-6,
            min_step_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub effect_kind: EffectKind,
    /// Acyclicity scale; `None` sets `t = 1/(ρ(B∘B) + dim)` each dual step,
    /// floored at `1e-4`.
    pub t: Option<f64>,
    pub prune_threshold: f64,
    /// Features whose effect magnitude is at most `gamma` are dropped.
    pub gamma: f64,
    /// Features whose effect magnitude is at most this fraction of `δ*` are
    /// dropped.
    pub selection_tolerance: f64,
    pub l1_penalty: f64,
    pub dual: DualSchedule,
    pub inner: InnerSchedule,
    /// Scale of the uniform initial perturbation; 0 starts from the empty graph.
    pub init_jitter: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            effect_kind: EffectKind::Total,
            t: None,
            prune_threshold: 0.3,
            gamma: 0.0,
            selection_tolerance: 0.01,
            l1_penalty: 0.0,
            dual: DualSchedule::default(),
            inner: InnerSchedule::default(),
            init_jitter: 0.0,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |msg: String| Err(OptimizerError::InvalidConfig(msg));
        let d = &self.dual;
        let i = &self.inner;
        if let Some(t) = self.t {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("t = {t} must be positive"));
            }
        }
        if !(d.growth > 1.0) {
            return bad(format!("penalty growth {} must exceed 1", d.growth));
        }
        if !(d.progress_ratio > 0.0 && d.progress_ratio < 1.0) {
            return bad(format!("progress ratio {} must lie in (0, 1)", d.progress_ratio));
        }
        if !(d.tolerance > 0.0 && d.relevance_tolerance > 0.0) {
            return bad("constraint tolerances must be positive".into());
        }
        if !(d.c_init > 0.0 && d.d_init > 0.0 && d.penalty_cap >= d.c_init.max(d.d_init)) {
            return bad("penalties must be positive and below the cap".into());
        }
        if d.max_steps == 0 {
            return bad("max dual steps must be positive".into());
        }
        if !(i.step_size > 0.0) || i.max_iterations == 0 || i.patience == 0 {
            return bad("inner step size, iteration cap and patience must be positive".into());
        }
        if !(i.min_step_ratio > 0.0 && i.min_step_ratio < 1.0) {
            return bad(format!("min step ratio {} must lie in (0, 1)", i.min_step_ratio));
        }
        for (name, v) in [
            ("prune threshold", self.prune_threshold),
            ("gamma", self.gamma),
            ("selection tolerance", self.selection_tolerance),
            ("l1 penalty", self.l1_penalty),
            ("init jitter", self.init_jitter),
            ("gradient tolerance", i.gradient_tolerance),
            ("relative improvement", i.relative_improvement),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// One row of the dual-ascent trace, recorded after the multiplier update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualStep {
    pub step: usize,
    pub t: f64,
    pub f: f64,
    pub h1: f64,
    pub h2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub c: f64,
    pub d: f64,
    pub selected: usize,
    pub inner_iterations: usize,
    /// Augmented-Lagrangian value at the start and end of the inner solve.
    pub inner_start: f64,
    pub inner_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub lambda1: f64,
    pub lambda2: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Pruned graph over the selected features and the outcome.
    pub graph: WeightedDag,
    /// Final iterate before pruning.
    pub raw_graph: WeightedDag,
    /// One flag per node; the outcome entry is always `false`.
    pub selected: Vec<bool>,
    pub diagnostics: Vec<DualStep>,
    pub delta_star_used: f64,
    pub converged: bool,
    pub multipliers: Multipliers,
}

impl FitResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&i| self.selected[i]).collect()
    }
}

struct Problem<'a> {
    cov: DMatrix<f64>,
    outcome: usize,
    labels: &'a [String],
    config: &'a FitConfig,
}

impl<'a> Problem<'a> {
    fn new(data: &'a Dataset, config: &'a FitConfig) -> Result<Self, OptimizerError> {
        config.validate()?;
        if data.n() == 0 {
            return Err(OptimizerError::EmptyData);
        }
        let shifted = shift_nonnegative(data);
        let mut x = shifted.values().clone();
        let means = x.row_mean();
        for mut row in x.row_iter_mut() {
            row -= &means;
        }
        let cov = x.transpose() * &x / data.n() as f64;
        Ok(Self {
            cov,
            outcome: data.outcome(),
            labels: data.labels(),
            config,
        })
    }

    fn dim(&self) -> usize {
        self.cov.nrows()
    }
}

struct State {
    b: DMatrix<f64>,
    mult: Multipliers,
    mask: Vec<bool>,
    h1_prev: f64,
    h2_prev: f64,
}

#[derive(Clone, Copy)]
struct Relevance {
    kind: EffectKind,
    delta_star: f64,
}

fn auto_t(b: &DMatrix<f64>) -> f64 {
    let rho = effects::spectral_radius(&b.component_mul(b));
    (1.0 / (rho + b.nrows() as f64)).max(1e-4)
}

fn objective_at(
    x: &DMatrix<f64>,
    p: &Problem,
    mask: &[bool],
    mult: &Multipliers,
    t: f64,
    relevance: Option<Relevance>,
) -> Result<(f64, DMatrix<f64>), OptimizerError> {
    let (f, mut grad) = covariance_loss(x, &p.cov, mask);
    let mut value = f;
    let l1 = p.config.l1_penalty;
    if l1 > 0.0 {
        value += l1 * x.iter().map(|w| w.abs()).sum::<f64>();
        grad += x.map(|w| if w == 0.0 { 0.0 } else { l1 * w.signum() });
    }
    let (h1, g1) = acyclicity(x, t)?;
    value += mult.lambda1 * h1 + mult.c * h1 * h1;
    grad += g1 * (mult.lambda1 + 2.0 * mult.c * h1);
    if let Some(r) = relevance {
        let (h2, g2) = relevance_constraint(x, mask, p.outcome, r.kind, r.delta_star)?;
        value += mult.lambda2 * h2 + mult.d * h2 * h2;
        grad += g2 * (mult.lambda2 + 2.0 * mult.d * h2);
    }
    Ok((value, grad))
}

/// Effects and `h2` of the iterate restricted to `mask` and thresholded.
fn thresholded_relevance(
    b: &DMatrix<f64>,
    mask: &[bool],
    p: &Problem,
    r: Relevance,
) -> Result<(Vec<f64>, f64), OptimizerError> {
    let thr = p.config.prune_threshold;
    let view = restrict_matrix(b, mask).map(|w| if w.abs() > thr { w } else { 0.0 });
    let ce: Vec<f64> = EffectOperator::new(&view, p.outcome, r.kind)?
        .values()
        .iter()
        .copied()
        .collect();
    let h2 = r.delta_star
        - (0..ce.len())
            .filter(|&i| i != p.outcome && mask[i])
            .map(|i| ce[i].abs())
            .sum::<f64>();
    Ok((ce, h2))
}

/// Drops features with negligible thresholded effect, smallest first, as
/// long as `h2` does not rise above its current magnitude. Returns whether
/// the mask changed.
fn shrink_mask(state: &mut State, p: &Problem, r: Relevance) -> Result<bool, OptimizerError> {
    let cutoff = (p.config.selection_tolerance * r.delta_star).max(p.config.gamma);
    let tol = p.config.dual.tolerance;
    let mut changed = false;
    loop {
        let (ce, h2) = thresholded_relevance(&state.b, &state.mask, p, r)?;
        let mut candidates: Vec<usize> = (0..p.dim())
            .filter(|&i| i != p.outcome && state.mask[i] && ce[i].abs() <= cutoff)
            .collect();
        candidates.sort_by(|&a, &b| ce[a].abs().total_cmp(&ce[b].abs()).then(a.cmp(&b)));
        let mut removed = None;
        for i in candidates {
            let mut trial = state.mask.clone();
            trial[i] = false;
            let (_, h2_trial) = thresholded_relevance(&state.b, &trial, p, r)?;
            if h2_trial <= h2.abs() + tol {
                removed = Some(trial);
                break;
            }
        }
        match removed {
            Some(trial) => {
                state.mask = trial;
                state.b = restrict_matrix(&state.b, &state.mask);
                changed = true;
            }
            None => return Ok(changed),
        }
    }
}

fn dual_ascent(
    p: &Problem,
    state: &mut State,
    relevance: Option<Relevance>,
    trace: &mut Vec<DualStep>,
) -> Result<bool, OptimizerError> {
    let cfg = p.config;
    let sched = &cfg.dual;
    let diverged = |step: usize, trace: &[DualStep]| OptimizerError::Diverged {
        step,
        trace: trace.iter().rev().take(5).rev().cloned().collect(),
    };
    for step in 0..sched.max_steps {
        let t = cfg.t.unwrap_or_else(|| auto_t(&state.b));
        let free = free_entries(p.dim(), &state.mask, p.outcome);
        let mask = state.mask.clone();
        let mult = state.mult;
        let inner = adam::minimize(
            |x| objective_at(x, p, &mask, &mult, t, relevance),
            &state.b,
            &free,
            &cfg.inner,
        )
        .map_err(|e| match e {
            OptimizerError::NonFiniteObjective | OptimizerError::NonFiniteAcyclicity => diverged(step, trace),
            other => other,
        })?;
        state.b = inner.b;
        let (f, _) = covariance_loss(&state.b, &p.cov, &state.mask);
        let h1 = acyclicity_value(&state.b, t)?;
        let h2 = match relevance {
            Some(r) => relevance_constraint(&state.b, &state.mask, p.outcome, r.kind, r.delta_star)?.0,
            None => 0.0,
        };
        if !(f.is_finite() && h1.is_finite() && h2.is_finite()) {
            return Err(diverged(step, trace));
        }

        // Multipliers move with the penalties used in this solve; penalties
        // then grow for the next one if progress was insufficient.
        let m = &mut state.mult;
        m.lambda1 += 2.0 * m.c * h1;
        if relevance.is_some() {
            m.lambda2 += 2.0 * m.d * h2;
        }
        if h1 > sched.tolerance && h1 > sched.progress_ratio * state.h1_prev {
            m.c = (m.c * sched.growth).min(sched.penalty_cap);
        }
        if relevance.is_some()
            && h2.abs() > sched.relevance_tolerance
            && h2.abs() > sched.progress_ratio * state.h2_prev
        {
            m.d = (m.d * sched.growth).min(sched.penalty_cap);
        }
        state.h1_prev = h1;
        state.h2_prev = h2.abs();

        let mut mask_changed = false;
        if let Some(r) = relevance {
            mask_changed = shrink_mask(state, p, r)?;
        }
        if mask_changed {
            // A smaller mask is a new subproblem; solve it from scratch so the
            // remaining nodes are not held in the basin of the larger fit.
            state.b.fill(0.0);
            state.mult = Multipliers {
                lambda1: sched.lambda1_init,
                lambda2: sched.lambda2_init,
                c: sched.c_init,
                d: sched.d_init,
            };
            state.h1_prev = f64::INFINITY;
            state.h2_prev = f64::INFINITY;
        }
        trace.push(DualStep {
            step: trace.len(),
            t,
            f,
            h1,
            h2,
            lambda1: state.mult.lambda1,
            lambda2: state.mult.lambda2,
            c: state.mult.c,
            d: state.mult.d,
            selected: (0..p.dim()).filter(|&i| i != p.outcome && state.mask[i]).count(),
            inner_iterations: inner.iterations,
            inner_start: inner.start_value,
            inner_value: inner.value,
        });
        log::debug!(
            "dual step {step}: f={f:.6e} h1={h1:.3e} h2={h2:.3e} c={:.1e} d={:.1e}",
            state.mult.c,
            state.mult.d
        );

        let feasible = h1 <= sched.tolerance && relevance.is_none_or(|_| h2.abs() <= sched.relevance_tolerance);
        if feasible && !mask_changed {
            return Ok(true);
        }
        let capped = state.mult.c >= sched.penalty_cap && relevance.is_none_or(|_| state.mult.d >= sched.penalty_cap);
        if capped && !mask_changed {
            return Ok(feasible);
        }
    }
    Ok(false)
}

/// Removes the smallest-magnitude edge of some directed cycle until the
/// pattern is acyclic.
fn break_cycles(b: &mut DMatrix<f64>) {
    while let Some(cycle) = find_cycle(b) {
        let (i, j) = cycle
            .iter()
            .copied()
            .min_by(|&(a, b_), &(c, d)| b[(a, b_)].abs().total_cmp(&b[(c, d)].abs()))
            .expect("cycles have edges");
        log::debug!("pruned graph cyclic; dropping edge {i}->{j}");
        b[(i, j)] = 0.0;
    }
}

fn find_cycle(b: &DMatrix<f64>) -> Option<Vec<(usize, usize)>> {
    let dim = b.nrows();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; dim];
    let mut parent = vec![usize::MAX; dim];
    for root in 0..dim {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next == dim {
                state[v] = 2;
                stack.pop();
                continue;
            }
            let w = *next;
            *next += 1;
            if b[(v, w)] == 0.0 {
                continue;
            }
            match state[w] {
                0 => {
                    parent[w] = v;
                    state[w] = 1;
                    stack.push((w, 0));
                }
                1 => {
                    let mut edges = vec![(v, w)];
                    let mut u = v;
                    while u != w {
                        edges.push((parent[u], u));
                        u = parent[u];
                    }
                    return Some(edges);
                }
                _ => {}
            }
        }
    }
    None
}

fn finish(
    p: &Problem,
    state: State,
    trace: Vec<DualStep>,
    converged: bool,
    delta_star: f64,
) -> Result<FitResult, OptimizerError> {
    let raw = restrict_matrix(&state.b, &state.mask);
    let mut pruned = raw.map(|w| if w.abs() > p.config.prune_threshold { w } else { 0.0 });
    break_cycles(&mut pruned);
    let labels = p.labels.to_vec();
    let mut selected = state.mask.clone();
    selected[p.outcome] = false;
    Ok(FitResult {
        graph: WeightedDag::with_outcome(pruned, labels.clone(), p.outcome)?,
        raw_graph: WeightedDag::with_outcome(raw, labels, p.outcome)?,
        selected,
        diagnostics: trace,
        delta_star_used: delta_star,
        converged,
        multipliers: state.mult,
    })
}

/// Selection-free fit: full mask, no relevance constraint.
pub fn fit_baseline(data: &Dataset, config: &FitConfig) -> Result<FitResult, OptimizerError> {
    let p = Problem::new(data, config)?;
    let dim = p.dim();
    let mut b = DMatrix::zeros(dim, dim);
    if config.init_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        b = DMatrix::from_fn(dim, dim, |_, _| {
            rng.random_range(-config.init_jitter..=config.init_jitter)
        });
    }
    let mask = vec![true; dim];
    let mut state = State {
        b: b.component_mul(&free_entries(dim, &mask, p.outcome)),
        mult: Multipliers {
            lambda1: config.dual.lambda1_init,
            lambda2: 0.0,
            c: config.dual.c_init,
            d: 0.0,
        },
        mask,
        h1_prev: f64::INFINITY,
        h2_prev: 0.0,
    };
    let mut trace = Vec::new();
    let converged = dual_ascent(&p, &mut state, None, &mut trace)?;
    let mut result = finish(&p, state, trace, converged, 0.0)?;
    result.delta_star_used = reference_score(&result.graph, config.effect_kind)?;
    Ok(result)
}

/// `Σ_i |CE_i|` over the features of a (pruned) graph.
pub fn reference_score(g: &WeightedDag, kind: EffectKind) -> Result<f64, OptimizerError> {
    Ok(effects::delta_star(
        &Dataset::new(DMatrix::zeros(0, g.dim()), g.labels().to_vec(), g.outcome())
            .map_err(|e| OptimizerError::Shape(e.to_string()))?,
        kind,
        |_| Ok::<_, EffectError>(g.clone()),
    )?)
}

/// Joint structure learning and feature selection, warm-started from a
/// previously computed baseline fit of the same data.
pub fn fit_with_baseline(
    data: &Dataset,
    config: &FitConfig,
    baseline: &FitResult,
) -> Result<FitResult, OptimizerError> {
    let p = Problem::new(data, config)?;
    let dim = p.dim();
    if baseline.raw_graph.dim() != dim || baseline.raw_graph.outcome() != p.outcome {
        return Err(OptimizerError::Shape("baseline was fitted on different data".into()));
    }
    let delta_star = effects::delta_star(data, config.effect_kind, |_| {
        Ok::<_, OptimizerError>(baseline.graph.clone())
    })?;
    let relevance = Relevance {
        kind: config.effect_kind,
        delta_star,
    };
    let mut state = State {
        b: baseline.raw_graph.weights().clone(),
        mult: Multipliers {
            lambda1: baseline.multipliers.lambda1,
            lambda2: config.dual.lambda2_init,
            c: baseline.multipliers.c,
            d: config.dual.d_init,
        },
        mask: vec![true; dim],
        h1_prev: baseline.diagnostics.last().map_or(f64::INFINITY, |s| s.h1),
        h2_prev: f64::INFINITY,
    };
    if shrink_mask(&mut state, &p, relevance)? {
        state.b.fill(0.0);
        state.mult = Multipliers {
            lambda1: config.dual.lambda1_init,
            lambda2: config.dual.lambda2_init,
            c: config.dual.c_init,
            d: config.dual.d_init,
        };
        state.h1_prev = f64::INFINITY;
    }
    let mut trace = Vec::new();
    let converged = dual_ascent(&p, &mut state, Some(relevance), &mut trace)?;
    finish(&p, state, trace, converged, delta_star)
}

/// Runs the baseline for `δ*`, then the selection-aware fit.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FitResult, OptimizerError> {
    let baseline = fit_baseline(data, config)?;
    fit_with_baseline(data, config, &baseline)
}
