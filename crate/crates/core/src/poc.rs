//! Probabilities of causation for a single feature.
//!
//! Exact values come from enumerating every exogenous noise assignment of a
//! small [`DiscreteScm`]. Lower bounds only need conditional probabilities of
//! the outcome, supplied through [`ConditionalProbability`]. The empirical
//! estimators multiply per-observation bound magnitudes in log space.
//!
//! An intervention `Z_i ≠ z_i` on a domain with more than two values is a
//! mixture over `z' ≠ z_i` weighted by the observational law of `Z_i`
//! restricted to `z' ≠ z_i` (conditional on `Z_{-i} = z_{-i}` for the
//! conditional kind). On binary domains it is the complement value.

use crate::graph::{GraphError, WeightedDag};
use crate::scm::Dataset;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Default bound on the number of joint noise states `exact_poc` enumerates.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum PocError {
    #[error("invalid SCM: {0}")]
    InvalidScm(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{states} joint noise states exceed the enumeration cap of {cap}")]
    EnumerationCap { states: u128, cap: u64 },
    #[error("node {node} out of range for {dim} nodes")]
    NodeOutOfRange { node: usize, dim: usize },
    #[error("node {0} is the outcome; probabilities of causation are defined for features only")]
    OutcomeNode(usize),
    #[error("value {value} is not in the domain of node {node}")]
    ValueOutOfDomain { node: usize, value: i64 },
    #[error("conditioning event {event} has zero mass")]
    ZeroMass { event: String },
    #[error("invalid conditioning values: {0}")]
    Conditioning(String),
    #[error("node {node} has {size} values; a binary feature is required")]
    NonBinary { node: usize, size: usize },
    #[error("outcome value {0} is negative; a nonnegative outcome is required")]
    NegativeOutcome(i64),
    #[error("cell ({row}, {col}) holds {value}, which is not an integer level")]
    NonIntegral { row: usize, col: usize, value: f64 },
    #[error("probability model returned {0}, outside [0, 1]")]
    InvalidProbability(f64),
    #[error("smoothing constant must be finite and nonnegative, got {0}")]
    InvalidSmoothing(f64),
}

/// Marginal (`M-POC`) or conditional (`C-POC`) probability of causation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PocKind {
    Marginal,
    Conditional,
}

impl fmt::Display for PocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PocKind::Marginal => "marginal",
            PocKind::Conditional => "conditional",
        })
    }
}

/// One endogenous node: `value = table[parent levels…, noise level]`.
///
/// `table` is row-major over the parents' domain positions in the order of
/// `parents`, with the noise level varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteNode {
    pub label: String,
    #[serde(default)]
    pub parents: Vec<usize>,
    pub domain: Vec<i64>,
    /// Probabilities of the noise levels `0..noise.len()`.
    pub noise: Vec<f64>,
    pub table: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScmDocument {
    nodes: Vec<DiscreteNode>,
    outcome: usize,
}

/// A structural causal model with finite domains and independent noise.
///
/// Serialized as `{"nodes": [...], "outcome": k}`; see [`DiscreteNode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScmDocument", into = "ScmDocument")]
pub struct DiscreteScm {
    nodes: Vec<DiscreteNode>,
    outcome: usize,
    order: Vec<usize>,
    strides: Vec<Vec<usize>>,
    // Table entries as positions in the node's domain.
    levels: Vec<Vec<usize>>,
}

impl TryFrom<ScmDocument> for DiscreteScm {
    type Error = PocError;

    fn try_from(doc: ScmDocument) -> Result<Self, PocError> {
        DiscreteScm::new(doc.nodes, doc.outcome)
    }
}

impl From<DiscreteScm> for ScmDocument {
    fn from(scm: DiscreteScm) -> Self {
        ScmDocument {
            nodes: scm.nodes,
            outcome: scm.outcome,
        }
    }
}

fn invalid(msg: impl Into<String>) -> PocError {
    PocError::InvalidScm(msg.into())
}

impl DiscreteScm {
    pub fn new(nodes: Vec<DiscreteNode>, outcome: usize) -> Result<Self, PocError> {
        let dim = nodes.len();
        if dim == 0 {
            return Err(invalid("no nodes"));
        }
        if outcome >= dim {
            return Err(PocError::NodeOutOfRange { node: outcome, dim });
        }
        let mut weights = DMatrix::zeros(dim, dim);
        let mut strides = Vec::with_capacity(dim);
        let mut levels = Vec::with_capacity(dim);
        for (k, node) in nodes.iter().enumerate() {
            let name = &node.label;
            if node.domain.is_empty() {
                return Err(invalid(format!("node {name} has an empty domain")));
            }
            for (a, v) in node.domain.iter().enumerate() {
                if node.domain[..a].contains(v) {
                    return Err(invalid(format!("node {name} lists value {v} twice")));
                }
            }
            if node.noise.is_empty() {
                return Err(invalid(format!("node {name} has no noise levels")));
            }
            if node.noise.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(invalid(format!(
                    "node {name} has a negative or non-finite noise probability"
                )));
            }
            let total: f64 = node.noise.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("noise probabilities of node {name} sum to {total}")));
            }
            for (a, &p) in node.parents.iter().enumerate() {
                if p >= dim {
                    return Err(PocError::NodeOutOfRange { node: p, dim });
                }
                if p == k {
                    return Err(invalid(format!("node {name} lists itself as a parent")));
                }
                if node.parents[..a].contains(&p) {
                    return Err(invalid(format!("node {name} lists parent {p} twice")));
                }
                weights[(p, k)] = 1.0;
            }
            let mut node_strides = vec![0; node.parents.len()];
            let mut size = node.noise.len();
            for (a, &p) in node.parents.iter().enumerate().rev() {
                node_strides[a] = size;
                size = size
                    .checked_mul(nodes[p].domain.len())
                    .ok_or_else(|| invalid(format!("table of node {name} is too large")))?;
            }
            if node.table.len() != size {
                return Err(invalid(format!(
                    "table of node {name} has {} entries, expected {size}",
                    node.table.len()
                )));
            }
            let node_levels = node
                .table
                .iter()
                .map(|v| {
                    node.domain
                        .iter()
                        .position(|d| d == v)
                        .ok_or_else(|| invalid(format!("table of node {name} produces {v}, outside its domain")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            strides.push(node_strides);
            levels.push(node_levels);
        }
        let labels = nodes.iter().map(|n| n.label.clone()).collect();
        let graph = WeightedDag::with_outcome(weights, labels, outcome)?;
        let order = graph.require_acyclic()?;
        Ok(Self {
            nodes,
            outcome,
            order,
            strides,
            levels,
        })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn nodes(&self) -> &[DiscreteNode] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &DiscreteNode {
        &self.nodes[k]
    }

    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(move |&k| k != self.outcome)
    }

    /// Structure with unit weights.
    pub fn graph(&self) -> WeightedDag {
        let dim = self.dim();
        let mut weights = DMatrix::zeros(dim, dim);
        for (k, node) in self.nodes.iter().enumerate() {
            for &p in &node.parents {
                weights[(p, k)] = 1.0;
            }
        }
        let labels = self.nodes.iter().map(|n| n.label.clone()).collect();
        WeightedDag::with_outcome(weights, labels, self.outcome).expect("structure validated at construction")
    }

    /// Number of joint noise assignments.
    pub fn noise_states(&self) -> u128 {
        self.nodes.iter().map(|n| n.noise.len() as u128).product()
    }

    fn check_node(&self, k: usize) -> Result<(), PocError> {
        if k >= self.dim() {
            Err(PocError::NodeOutOfRange {
                node: k,
                dim: self.dim(),
            })
        } else {
            Ok(())
        }
    }

    fn check_feature(&self, k: usize) -> Result<(), PocError> {
        self.check_node(k)?;
        if k == self.outcome {
            return Err(PocError::OutcomeNode(k));
        }
        Ok(())
    }

    fn level(&self, node: usize, value: i64) -> Result<usize, PocError> {
        self.nodes[node]
            .domain
            .iter()
            .position(|&v| v == value)
            .ok_or(PocError::ValueOutOfDomain { node, value })
    }

    /// Evaluates one node from the current levels of its parents.
    fn eval_node(&self, k: usize, noise: &[usize], levels: &[usize]) -> usize {
        let node = &self.nodes[k];
        let mut idx = noise[k];
        for (a, &p) in node.parents.iter().enumerate() {
            idx += levels[p] * self.strides[k][a];
        }
        self.levels[k][idx]
    }

    /// Solves the model under `fixed` interventions (domain positions).
    fn solve(&self, noise: &[usize], fixed: &[Option<usize>], levels: &mut [usize]) {
        for &k in &self.order {
            levels[k] = match fixed[k] {
                Some(l) => l,
                None => self.eval_node(k, noise, levels),
            };
        }
    }

    /// Calls `f(noise, probability)` for every noise assignment of positive mass.
    fn for_each_state(&self, cap: u64, mut f: impl FnMut(&[usize], f64)) -> Result<(), PocError> {
        let states = self.noise_states();
        if states > cap as u128 {
            return Err(PocError::EnumerationCap { states, cap });
        }
        let dim = self.dim();
        let mut noise = vec![0usize; dim];
        loop {
            let p: f64 = (0..dim).map(|k| self.nodes[k].noise[noise[k]]).product();
            if p > 0.0 {
                f(&noise, p);
            }
            let mut k = 0;
            loop {
                if k == dim {
                    return Ok(());
                }
                noise[k] += 1;
                if noise[k] < self.nodes[k].noise.len() {
                    break;
                }
                noise[k] = 0;
                k += 1;
            }
        }
    }

    /// Observational joint law of all nodes.
    pub fn distribution(&self) -> Result<JointDistribution, PocError> {
        self.distribution_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn distribution_capped(&self, cap: u64) -> Result<JointDistribution, PocError> {
        let dim = self.dim();
        let fixed = vec![None; dim];
        let mut levels = vec![0; dim];
        let mut atoms: BTreeMap<Vec<i64>, Neumaier> = BTreeMap::new();
        self.for_each_state(cap, |noise, p| {
            self.solve(noise, &fixed, &mut levels);
            let values = (0..dim).map(|k| self.nodes[k].domain[levels[k]]).collect();
            atoms.entry(values).or_default().add(p);
        })?;
        Ok(JointDistribution {
            dim,
            outcome: self.outcome,
            atoms: atoms.into_iter().map(|(v, s)| (v, s.total())).collect(),
        })
    }
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// One clause of a conditioning event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    Eq(usize, i64),
    Ne(usize, i64),
}

impl Condition {
    pub fn holds(&self, row: &[i64]) -> bool {
        match *self {
            Condition::Eq(k, v) => row[k] == v,
            Condition::Ne(k, v) => row[k] != v,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Eq(k, v) => write!(f, "X{k} = {v}"),
            Condition::Ne(k, v) => write!(f, "X{k} != {v}"),
        }
    }
}

fn describe(given: &[Condition]) -> String {
    if given.is_empty() {
        return "{}".to_string();
    }
    let parts: Vec<String> = given.iter().map(|c| c.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Source of `P(Y = y | event)`.
pub trait ConditionalProbability {
    /// Returns `None` when the conditioning event has no mass.
    fn conditional(&self, y: i64, given: &[Condition]) -> Option<f64>;
}

/// Finite joint distribution over node values.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    dim: usize,
    outcome: usize,
    atoms: Vec<(Vec<i64>, f64)>,
}

impl JointDistribution {
    pub fn atoms(&self) -> &[(Vec<i64>, f64)] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn probability(&self, event: &[Condition]) -> f64 {
        let mut acc = Neumaier::default();
        for (row, p) in &self.atoms {
            if event.iter().all(|c| c.holds(row)) {
                acc.add(*p);
            }
        }
        acc.total()
    }

    /// `E[Y | event]`, or `None` on a null event.
    pub fn expectation(&self, given: &[Condition]) -> Option<f64> {
        let mut mass = Neumaier::default();
        let mut first = Neumaier::default();
        for (row, p) in &self.atoms {
            if given.iter().all(|c| c.holds(row)) {
                mass.add(*p);
                first.add(*p * row[self.outcome] as f64);
            }
        }
        let mass = mass.total();
        (mass > 0.0).then(|| first.total() / mass)
    }
}

impl ConditionalProbability for JointDistribution {
    fn conditional(&self, y: i64, given: &[Condition]) -> Option<f64> {
        let mut mass = Neumaier::default();
        let mut hit = Neumaier::default();
        for (row, p) in &self.atoms {
            if given.iter().all(|c| c.holds(row)) {
                mass.add(*p);
                if row[self.outcome] == y {
                    hit.add(*p);
                }
            }
        }
        let mass = mass.total();
        (mass > 0.0).then(|| hit.total() / mass)
    }
}

/// Lower bound on a probability of causation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PocBound {
    pub node: usize,
    pub z_i: i64,
    pub y: i64,
    pub kind: PocKind,
    pub lower_bound: f64,
    pub z_minus_i: Option<Vec<(usize, i64)>>,
}

fn context(z_minus_i: &[(usize, i64)]) -> Vec<Condition> {
    z_minus_i.iter().map(|&(k, v)| Condition::Eq(k, v)).collect()
}

fn conditional_or_err<P: ConditionalProbability + ?Sized>(
    probs: &P,
    y: i64,
    given: &[Condition],
) -> Result<f64, PocError> {
    match probs.conditional(y, given) {
        None => Err(PocError::ZeroMass { event: describe(given) }),
        Some(p) if !(0.0..=1.0).contains(&p) => Err(PocError::InvalidProbability(p)),
        Some(p) => Ok(p),
    }
}

/// `P(Y=y | Z_i=z_i [, Z_{-i}=z_{-i}]) − P(Y=y | Z_i≠z_i [, Z_{-i}=z_{-i}])`.
pub fn poc_lower_bound<P: ConditionalProbability + ?Sized>(
    probs: &P,
    i: usize,
    z_i: i64,
    y: i64,
    kind: PocKind,
    z_minus_i: Option<&[(usize, i64)]>,
) -> Result<PocBound, PocError> {
    let ctx = match (kind, z_minus_i) {
        (PocKind::Marginal, _) => Vec::new(),
        (PocKind::Conditional, Some(z)) => {
            if z.iter().any(|&(k, _)| k == i) {
                return Err(PocError::Conditioning(format!("node {i} appears in its own context")));
            }
            context(z)
        }
        (PocKind::Conditional, None) => {
            return Err(PocError::Conditioning("the conditional kind needs z_minus_i".into()))
        }
    };
    let mut eq = vec![Condition::Eq(i, z_i)];
    eq.extend_from_slice(&ctx);
    let mut ne = vec![Condition::Ne(i, z_i)];
    ne.extend_from_slice(&ctx);
    let lower_bound = conditional_or_err(probs, y, &eq)? - conditional_or_err(probs, y, &ne)?;
    Ok(PocBound {
        node: i,
        z_i,
        y,
        kind,
        lower_bound,
        z_minus_i: match kind {
            PocKind::Marginal => None,
            PocKind::Conditional => z_minus_i.map(<[_]>::to_vec),
        },
    })
}

impl DiscreteScm {
    /// Checks that `z_minus_i` fixes every feature except `i`, once each.
    fn context_levels(&self, i: usize, z_minus_i: &[(usize, i64)]) -> Result<Vec<Option<usize>>, PocError> {
        let mut fixed = vec![None; self.dim()];
        for &(k, v) in z_minus_i {
            self.check_feature(k)?;
            if k == i {
                return Err(PocError::Conditioning(format!("node {i} appears in its own context")));
            }
            if fixed[k].is_some() {
                return Err(PocError::Conditioning(format!("node {k} is fixed twice")));
            }
            fixed[k] = Some(self.level(k, v)?);
        }
        if let Some(k) = self.features().find(|&k| k != i && fixed[k].is_none()) {
            return Err(PocError::Conditioning(format!("node {k} is not fixed")));
        }
        Ok(fixed)
    }

    /// Levels `z' ≠ z_i` and their mixture weights.
    fn complement_weights(
        &self,
        i: usize,
        level: usize,
        ctx: &[Condition],
        cap: u64,
    ) -> Result<Vec<(usize, f64)>, PocError> {
        let size = self.nodes[i].domain.len();
        if size == 1 {
            return Err(PocError::ZeroMass {
                event: describe(&[Condition::Ne(i, self.nodes[i].domain[0])]),
            });
        }
        if size == 2 {
            return Ok(vec![(1 - level, 1.0)]);
        }
        let joint = self.distribution_capped(cap)?;
        let mut event = vec![Condition::Ne(i, self.nodes[i].domain[level])];
        event.extend_from_slice(ctx);
        let mass = joint.probability(&event);
        if mass <= 0.0 {
            return Err(PocError::ZeroMass {
                event: describe(&event),
            });
        }
        Ok((0..size)
            .filter(|&l| l != level)
            .map(|l| {
                event[0] = Condition::Eq(i, self.nodes[i].domain[l]);
                (l, joint.probability(&event) / mass)
            })
            .filter(|&(_, w)| w > 0.0)
            .collect())
    }
}

/// Exact `P{Y(Z_i ≠ z_i) ≠ y, Y(Z_i = z_i) = y}` by enumeration; the
/// conditional kind also holds `Z_{-i} = z_{-i}` in both worlds.
pub fn exact_poc(
    scm: &DiscreteScm,
    i: usize,
    z_i: i64,
    y: i64,
    kind: PocKind,
    z_minus_i: Option<&[(usize, i64)]>,
) -> Result<f64, PocError> {
    exact_poc_capped(scm, i, z_i, y, kind, z_minus_i, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_poc_capped(
    scm: &DiscreteScm,
    i: usize,
    z_i: i64,
    y: i64,
    kind: PocKind,
    z_minus_i: Option<&[(usize, i64)]>,
    cap: u64,
) -> Result<f64, PocError> {
    scm.check_feature(i)?;
    let level = scm.level(i, z_i)?;
    let outcome = scm.outcome;
    let y_level = scm.level(outcome, y)?;
    let (mut fixed, ctx) = match kind {
        PocKind::Marginal => (vec![None; scm.dim()], Vec::new()),
        PocKind::Conditional => {
            let z = z_minus_i.ok_or_else(|| PocError::Conditioning("the conditional kind needs z_minus_i".into()))?;
            (scm.context_levels(i, z)?, context(z))
        }
    };
    let others = scm.complement_weights(i, level, &ctx, cap)?;
    let mut levels = vec![0; scm.dim()];
    let mut acc = Neumaier::default();
    scm.for_each_state(cap, |noise, p| {
        fixed[i] = Some(level);
        scm.solve(noise, &fixed, &mut levels);
        if levels[outcome] != y_level {
            return;
        }
        let mut flipped = 0.0;
        for &(l, w) in &others {
            fixed[i] = Some(l);
            scm.solve(noise, &fixed, &mut levels);
            if levels[outcome] != y_level {
                flipped += w;
            }
        }
        acc.add(p * flipped);
    })?;
    Ok(acc.total().clamp(0.0, 1.0))
}

/// Probability of necessity `P{Y(Z_i ≠ z_i) ≠ y | Z_i = z_i, Y = y}`.
pub fn probability_of_necessity(scm: &DiscreteScm, i: usize, z_i: i64, y: i64) -> Result<f64, PocError> {
    scm.check_feature(i)?;
    let level = scm.level(i, z_i)?;
    let y_level = scm.level(scm.outcome, y)?;
    let others = scm.complement_weights(i, level, &[], DEFAULT_ENUMERATION_CAP)?;
    counterfactual_given(
        scm,
        i,
        |lz, ly| lz == level && ly == y_level,
        |levels_of| {
            others
                .iter()
                .filter(|&&(l, _)| levels_of(l) != y_level)
                .map(|&(_, w)| w)
                .sum()
        },
    )
    .map_err(|_| PocError::ZeroMass {
        event: describe(&[Condition::Eq(i, z_i), Condition::Eq(scm.outcome, y)]),
    })
}

/// Probability of sufficiency `P{Y(Z_i = z_i) = y | Z_i ≠ z_i, Y ≠ y}`.
pub fn probability_of_sufficiency(scm: &DiscreteScm, i: usize, z_i: i64, y: i64) -> Result<f64, PocError> {
    scm.check_feature(i)?;
    let level = scm.level(i, z_i)?;
    let y_level = scm.level(scm.outcome, y)?;
    counterfactual_given(
        scm,
        i,
        |lz, ly| lz != level && ly != y_level,
        |levels_of| {
            if levels_of(level) == y_level {
                1.0
            } else {
                0.0
            }
        },
    )
    .map_err(|_| PocError::ZeroMass {
        event: describe(&[Condition::Ne(i, z_i), Condition::Ne(scm.outcome, y)]),
    })
}

/// `E[g | observed]` where `g` sees the outcome level under `do(Z_i = l)`.
fn counterfactual_given(
    scm: &DiscreteScm,
    i: usize,
    observed: impl Fn(usize, usize) -> bool,
    g: impl Fn(&dyn Fn(usize) -> usize) -> f64,
) -> Result<f64, ()> {
    let dim = scm.dim();
    let outcome = scm.outcome;
    let free = vec![None; dim];
    let mut levels = vec![0; dim];
    let mut mass = Neumaier::default();
    let mut hit = Neumaier::default();
    scm.for_each_state(DEFAULT_ENUMERATION_CAP, |noise, p| {
        scm.solve(noise, &free, &mut levels);
        if !observed(levels[i], levels[outcome]) {
            return;
        }
        mass.add(p);
        let under = |l: usize| {
            let mut fixed = vec![None; dim];
            fixed[i] = Some(l);
            let mut cf = vec![0; dim];
            scm.solve(noise, &fixed, &mut cf);
            cf[outcome]
        };
        hit.add(p * g(&under));
    })
    .map_err(|_| ())?;
    let mass = mass.total();
    if mass > 0.0 {
        Ok(hit.total() / mass)
    } else {
        Err(())
    }
}

/// Exact quantities behind the relation between POCs and causal effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Record {
    /// `Σ_y y·M-POC_i(y)`.
    pub lhs_m: f64,
    /// `Σ_y y·C-POC_i(y)`.
    pub lhs_c: f64,
    pub delta_m: f64,
    pub delta_c: f64,
    pub te_abs: f64,
    /// Natural direct effect: other features keep their values under `do(Z_i = z_i)`.
    pub de_abs: f64,
}

impl Theorem2Record {
    pub fn marginal_slack(&self) -> f64 {
        self.lhs_m - self.delta_m
    }

    pub fn conditional_slack(&self) -> f64 {
        self.lhs_c - self.delta_c
    }

    /// `min{Σ y·M-POC, |TE|} − δ_M`.
    pub fn marginal_min_slack(&self) -> f64 {
        self.lhs_m.min(self.te_abs) - self.delta_m
    }

    /// `min{Σ y·C-POC, |DE|} − δ_C`.
    pub fn conditional_min_slack(&self) -> f64 {
        self.lhs_c.min(self.de_abs) - self.delta_c
    }
}

/// Computes every term of the POC/effect inequalities for a binary `Z_i`
/// and nonnegative outcome; `z_minus_i` fixes the remaining features.
pub fn theorem2_check(
    scm: &DiscreteScm,
    i: usize,
    z_i: i64,
    z_minus_i: &[(usize, i64)],
) -> Result<Theorem2Record, PocError> {
    scm.check_feature(i)?;
    let size = scm.nodes[i].domain.len();
    if size != 2 {
        return Err(PocError::NonBinary { node: i, size });
    }
    let outcome = scm.outcome;
    if let Some(&y) = scm.nodes[outcome].domain.iter().find(|&&y| y < 0) {
        return Err(PocError::NegativeOutcome(y));
    }
    let level = scm.level(i, z_i)?;
    let mut fixed_ctx = scm.context_levels(i, z_minus_i)?;
    let ctx = context(z_minus_i);

    let mut lhs_m = Neumaier::default();
    let mut lhs_c = Neumaier::default();
    for &y in &scm.nodes[outcome].domain {
        if y != 0 {
            lhs_m.add(y as f64 * exact_poc(scm, i, z_i, y, PocKind::Marginal, None)?);
            lhs_c.add(y as f64 * exact_poc(scm, i, z_i, y, PocKind::Conditional, Some(z_minus_i))?);
        }
    }

    let joint = scm.distribution()?;
    let expect = |given: &[Condition]| {
        joint
            .expectation(given)
            .ok_or_else(|| PocError::ZeroMass { event: describe(given) })
    };
    let mut eq = vec![Condition::Eq(i, z_i)];
    let mut ne = vec![Condition::Ne(i, z_i)];
    let delta_m = expect(&eq)? - expect(&ne)?;
    eq.extend_from_slice(&ctx);
    ne.extend_from_slice(&ctx);
    let delta_c = expect(&eq)? - expect(&ne)?;

    let dim = scm.dim();
    let other = 1 - level;
    let y_value = |l: usize| scm.nodes[outcome].domain[l] as f64;
    let mut base = vec![None; dim];
    base[i] = Some(level);
    let mut flip = vec![None; dim];
    flip[i] = Some(other);
    let mut world = vec![0; dim];
    let mut scratch = vec![0; dim];
    let mut te = Neumaier::default();
    let mut de = Neumaier::default();
    scm.for_each_state(DEFAULT_ENUMERATION_CAP, |noise, p| {
        scm.solve(noise, &base, &mut world);
        let y0 = y_value(world[outcome]);
        scm.solve(noise, &flip, &mut scratch);
        te.add(p * (y_value(scratch[outcome]) - y0));
        // Natural direct effect: flip Z_i, keep every other feature at its
        // value in the do(Z_i = z_i) world, re-evaluate the outcome only.
        for k in scm.features() {
            fixed_ctx[k] = Some(world[k]);
        }
        fixed_ctx[i] = Some(other);
        scm.solve(noise, &fixed_ctx, &mut scratch);
        de.add(p * (y_value(scratch[outcome]) - y0));
    })?;

    Ok(Theorem2Record {
        lhs_m: lhs_m.total(),
        lhs_c: lhs_c.total(),
        delta_m,
        delta_c,
        te_abs: te.total().abs(),
        de_abs: de.total().abs(),
    })
}

/// Product estimator of a probability of causation over `n` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPoc {
    /// Natural log of the product; `-inf` when some factor is exactly zero.
    pub log_value: f64,
    /// The product itself, which underflows to 0 for large `n`.
    pub value: f64,
    /// `exp(log_value / n)`, a per-observation diagnostic.
    pub geometric_mean: f64,
    pub n: usize,
}

impl EmpiricalPoc {
    fn from_log(log_value: f64, n: usize) -> Self {
        let geometric_mean = if n == 0 { 1.0 } else { (log_value / n as f64).exp() };
        Self {
            log_value,
            value: log_value.exp(),
            geometric_mean,
            n,
        }
    }
}

/// Integer levels of every cell; fails on non-integral values.
pub fn integer_rows(data: &Dataset) -> Result<Vec<Vec<i64>>, PocError> {
    let values = data.values();
    (0..data.n())
        .map(|row| {
            (0..data.dim())
                .map(|col| {
                    let value = values[(row, col)];
                    let r = value.round();
                    if (value - r).abs() > 1e-9 || r.abs() > 9.0e15 {
                        Err(PocError::NonIntegral { row, col, value })
                    } else {
                        Ok(r as i64)
                    }
                })
                .collect()
        })
        .collect()
}

/// Empirical conditional frequencies of the outcome with additive smoothing:
/// `(n(E, Y=y) + α) / (n(E) + α·|levels of Y|)`.
#[derive(Debug, Clone)]
pub struct FrequencyModel {
    rows: Vec<Vec<i64>>,
    outcome: usize,
    outcome_levels: usize,
    alpha: f64,
}

impl FrequencyModel {
    pub fn fit(data: &Dataset, alpha: f64) -> Result<Self, PocError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(PocError::InvalidSmoothing(alpha));
        }
        let rows = integer_rows(data)?;
        let outcome = data.outcome();
        let mut levels: Vec<i64> = rows.iter().map(|r| r[outcome]).collect();
        levels.sort_unstable();
        levels.dedup();
        Ok(Self {
            rows,
            outcome,
            outcome_levels: levels.len().max(1),
            alpha,
        })
    }

    /// Laplace (add-one) smoothing.
    pub fn laplace(data: &Dataset) -> Result<Self, PocError> {
        Self::fit(data, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl ConditionalProbability for FrequencyModel {
    fn conditional(&self, y: i64, given: &[Condition]) -> Option<f64> {
        let mut n_e = 0usize;
        let mut n_ey = 0usize;
        for row in &self.rows {
            if given.iter().all(|c| c.holds(row)) {
                n_e += 1;
                if row[self.outcome] == y {
                    n_ey += 1;
                }
            }
        }
        let denom = n_e as f64 + self.alpha * self.outcome_levels as f64;
        (denom > 0.0).then(|| (n_ey as f64 + self.alpha) / denom)
    }
}

fn product_estimator<P: ConditionalProbability + ?Sized>(
    data: &Dataset,
    i: usize,
    context_cols: &[usize],
    model: &P,
) -> Result<EmpiricalPoc, PocError> {
    if i >= data.dim() {
        return Err(PocError::NodeOutOfRange {
            node: i,
            dim: data.dim(),
        });
    }
    if i == data.outcome() {
        return Err(PocError::OutcomeNode(i));
    }
    let rows = integer_rows(data)?;
    let outcome = data.outcome();
    // Identical observations contribute identical factors; grouping them in a
    // sorted map makes the sum independent of observation order.
    let mut patterns: BTreeMap<(i64, i64, Vec<i64>), usize> = BTreeMap::new();
    for row in &rows {
        let ctx = context_cols.iter().map(|&k| row[k]).collect();
        *patterns.entry((row[outcome], row[i], ctx)).or_default() += 1;
    }
    let mut log = Neumaier::default();
    for ((y, z, ctx), count) in patterns {
        let ctx: Vec<Condition> = context_cols
            .iter()
            .zip(ctx)
            .map(|(&k, v)| Condition::Eq(k, v))
            .collect();
        let mut eq = vec![Condition::Eq(i, z)];
        eq.extend_from_slice(&ctx);
        let mut ne = vec![Condition::Ne(i, z)];
        ne.extend_from_slice(&ctx);
        let factor = (conditional_or_err(model, y, &eq)? - conditional_or_err(model, y, &ne)?).abs();
        if factor == 0.0 {
            return Ok(EmpiricalPoc::from_log(f64::NEG_INFINITY, rows.len()));
        }
        log.add(count as f64 * factor.ln());
    }
    Ok(EmpiricalPoc::from_log(log.total(), rows.len()))
}

/// `Π_j |P̂(Y=y_j | Z_i=z_ij) − P̂(Y=y_j | Z_i≠z_ij)|`.
pub fn empirical_mpoc<P: ConditionalProbability + ?Sized>(
    data: &Dataset,
    i: usize,
    model: &P,
) -> Result<EmpiricalPoc, PocError> {
    product_estimator(data, i, &[], model)
}

/// As [`empirical_mpoc`], with every other column of `features` held at its
/// observed value in both conditionals.
pub fn empirical_cpoc<P: ConditionalProbability + ?Sized>(
    data: &Dataset,
    i: usize,
    features: &[usize],
    model: &P,
) -> Result<EmpiricalPoc, PocError> {
    if !features.contains(&i) {
        return Err(PocError::Conditioning(format!(
            "node {i} is not among the selected features"
        )));
    }
    let mut ctx = Vec::with_capacity(features.len());
    for &k in features {
        if k >= data.dim() {
            return Err(PocError::NodeOutOfRange {
                node: k,
                dim: data.dim(),
            });
        }
        if k == data.outcome() {
            return Err(PocError::OutcomeNode(k));
        }
        if k != i && !ctx.contains(&k) {
            ctx.push(k);
        }
    }
    product_estimator(data, i, &ctx, model)
}

/// Outcome structure for [`random_binary_scm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeForm {
    /// Binary outcome with an arbitrary table.
    Arbitrary,
    /// `Y = Σ a_k Z_k + e` with `a_k ∈ {1, 2}` and binary `e`.
    Additive,
    /// `Y = Z_0 ∨ g(other parents, e)`; node 0 is always a root parent of `Y`.
    Monotone,
}

/// Random SCM with `features` binary features (node order is topological)
/// and the outcome last. Noise levels per node are 2 or 3 with probabilities
/// bounded away from zero.
pub fn random_binary_scm(features: usize, form: OutcomeForm, seed: u64) -> DiscreteScm {
    assert!(features >= 1, "at least one feature is required");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_law = |rng: &mut ChaCha8Rng| {
        let levels = rng.random_range(2..=3usize);
        let raw: Vec<f64> = (0..levels).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect::<Vec<f64>>()
    };
    let mut nodes = Vec::with_capacity(features + 1);
    for k in 0..features {
        let parents: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
        let noise = noise_law(&mut rng);
        let size = noise.len() << parents.len();
        let table = (0..size).map(|_| rng.random_range(0..=1i64)).collect();
        nodes.push(DiscreteNode {
            label: format!("Z{k}"),
            parents,
            domain: vec![0, 1],
            noise,
            table,
        });
    }
    let mut parents: Vec<usize> = (0..features).filter(|_| rng.random_bool(0.7)).collect();
    if form == OutcomeForm::Monotone && !parents.contains(&0) {
        parents.insert(0, 0);
    }
    let noise = noise_law(&mut rng);
    let levels = noise.len();
    let size = levels << parents.len();
    let (domain, table) = match form {
        OutcomeForm::Arbitrary => (vec![0, 1], (0..size).map(|_| rng.random_range(0..=1i64)).collect()),
        OutcomeForm::Additive => {
            let coef: Vec<i64> = parents.iter().map(|_| rng.random_range(1..=2)).collect();
            let shift: Vec<i64> = (0..levels).map(|_| rng.random_range(0..=1)).collect();
            let max = coef.iter().sum::<i64>() + 1;
            let table = (0..size)
                .map(|idx| {
                    let e = idx % levels;
                    let bits = idx / levels;
                    let linear: i64 = (0..parents.len())
                        .map(|a| coef[a] * ((bits >> (parents.len() - 1 - a)) & 1) as i64)
                        .sum();
                    linear + shift[e]
                })
                .collect();
            ((0..=max).collect(), table)
        }
        OutcomeForm::Monotone => {
            let g: Vec<i64> = (0..size).map(|_| rng.random_range(0..=1i64)).collect();
            let table = (0..size)
                .map(|idx| {
                    // Node 0 is the first parent, hence the most significant bit.
                    let z0 = ((idx / levels) >> (parents.len() - 1)) & 1;
                    if z0 == 1 {
                        1
                    } else {
                        g[idx]
                    }
                })
                .collect();
            (vec![0, 1], table)
        }
    };
    nodes.push(DiscreteNode {
        label: "Y".into(),
        parents,
        domain,
        noise,
        table,
    });
    DiscreteScm::new(nodes, features).expect("generator produces valid SCMs")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(label: &str, parents: Vec<usize>, domain: Vec<i64>, noise: Vec<f64>, table: Vec<i64>) -> DiscreteNode {
        DiscreteNode {
            label: label.into(),
            parents,
            domain,
            noise,
            table,
        }
    }

    /// `Z ~ Bern(q)`, `Y = Z`.
    fn copy_scm(q: f64) -> DiscreteScm {
        DiscreteScm::new(
            vec![
                node("Z", vec![], vec![0, 1], vec![1.0 - q, q], vec![0, 1]),
                node("Y", vec![0], vec![0, 1], vec![1.0], vec![0, 1]),
            ],
            1,
        )
        .unwrap()
    }

    /// `Z ~ Bern(0.3)`, `Y ~ Bern(0.6)` with no edge.
    fn independent_scm() -> DiscreteScm {
        DiscreteScm::new(
            vec![
                node("Z", vec![], vec![0, 1], vec![0.7, 0.3], vec![0, 1]),
                node("Y", vec![], vec![0, 1], vec![0.4, 0.6], vec![0, 1]),
            ],
            1,
        )
        .unwrap()
    }

    /// `Z1, Z2 ~ Bern(0.5)`, `Y = Z1 xor Z2`.
    fn xor_scm() -> DiscreteScm {
        DiscreteScm::new(
            vec![
                node("Z1", vec![], vec![0, 1], vec![0.5, 0.5], vec![0, 1]),
                node("Z2", vec![], vec![0, 1], vec![0.5, 0.5], vec![0, 1]),
                node("Y", vec![0, 1], vec![0, 1], vec![1.0], vec![0, 1, 1, 0]),
            ],
            2,
        )
        .unwrap()
    }

    fn dataset(rows: &[[f64; 2]]) -> Dataset {
        let values = DMatrix::from_fn(rows.len(), 2, |r, c| rows[r][c]);
        Dataset::new(values, vec!["Z".into(), "Y".into()], 1).unwrap()
    }

    #[test]
    fn deterministic_copy_saturates() {
        let scm = copy_scm(0.4);
        let poc = exact_poc(&scm, 0, 1, 1, PocKind::Marginal, None).unwrap();
        assert_eq!(poc, 1.0);
        let joint = scm.distribution().unwrap();
        let bound = poc_lower_bound(&joint, 0, 1, 1, PocKind::Marginal, None).unwrap();
        assert!((bound.lower_bound - 1.0).abs() < 1e-15);
        let c = exact_poc(&scm, 0, 0, 0, PocKind::Conditional, Some(&[])).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn independence_gives_zero() {
        let scm = independent_scm();
        for (z, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(exact_poc(&scm, 0, z, y, PocKind::Marginal, None).unwrap(), 0.0);
            let bound = poc_lower_bound(&scm.distribution().unwrap(), 0, z, y, PocKind::Marginal, None).unwrap();
            assert!(bound.lower_bound.abs() < 1e-15);
        }
        let rec = theorem2_check(&scm, 0, 1, &[]).unwrap();
        for v in [rec.lhs_m, rec.lhs_c, rec.delta_m, rec.delta_c, rec.te_abs, rec.de_abs] {
            assert!(v.abs() < 1e-15, "{rec:?}");
        }
    }

    #[test]
    fn deterministic_theorem2_saturation() {
        let rec = theorem2_check(&copy_scm(0.5), 0, 1, &[]).unwrap();
        assert!((rec.lhs_m - 1.0).abs() < 1e-15);
        assert!((rec.delta_m - 1.0).abs() < 1e-15);
        assert!((rec.te_abs - 1.0).abs() < 1e-15);
        assert!((rec.de_abs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn xor_outcome_breaks_natural_direct_effect_form() {
        // The natural direct effect averages over Z2 and cancels, while the
        // conditional contrast at Z2 = 0 is a full unit.
        let rec = theorem2_check(&xor_scm(), 0, 1, &[(1, 0)]).unwrap();
        assert!(rec.de_abs.abs() < 1e-15);
        assert!((rec.delta_c - 1.0).abs() < 1e-15);
        assert!((rec.lhs_c - 1.0).abs() < 1e-15);
        assert!(rec.conditional_slack() >= -1e-12);
        assert!(rec.conditional_min_slack() < -0.5);
    }

    #[test]
    fn bound_reports_zero_mass_event() {
        let scm = copy_scm(1.0);
        let joint = scm.distribution().unwrap();
        let err = poc_lower_bound(&joint, 0, 1, 1, PocKind::Marginal, None).unwrap_err();
        match err {
            PocError::ZeroMass { event } => assert_eq!(event, "{X0 != 1}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn mixture_intervention_on_ternary_feature() {
        // Z uniform on {0,1,2}; Y = 1 iff Z = 2. For z=0, y=0: Y(0)=0 always,
        // Y(≠0) ≠ 0 with mixture weight of level 2 = 1/2.
        let scm = DiscreteScm::new(
            vec![
                node("Z", vec![], vec![0, 1, 2], vec![1.0 / 3.0; 3], vec![0, 1, 2]),
                node("Y", vec![0], vec![0, 1], vec![1.0], vec![0, 0, 1]),
            ],
            1,
        )
        .unwrap();
        let poc = exact_poc(&scm, 0, 0, 0, PocKind::Marginal, None).unwrap();
        assert!((poc - 0.5).abs() < 1e-15);
        let bound = poc_lower_bound(&scm.distribution().unwrap(), 0, 0, 0, PocKind::Marginal, None).unwrap();
        assert!((bound.lower_bound - 0.5).abs() < 1e-15);
    }

    #[test]
    fn necessity_and_sufficiency() {
        // Y = Z or U with U ~ Bern(0.5), Z ~ Bern(0.5).
        let scm = DiscreteScm::new(
            vec![
                node("Z", vec![], vec![0, 1], vec![0.5, 0.5], vec![0, 1]),
                node("Y", vec![0], vec![0, 1], vec![0.5, 0.5], vec![0, 1, 1, 1]),
            ],
            1,
        )
        .unwrap();
        // Given Z=1, Y=1: Y(0)=U, so PN = P(U=0) = 0.5.
        assert!((probability_of_necessity(&scm, 0, 1, 1).unwrap() - 0.5).abs() < 1e-15);
        // Given Z=0, Y=0: Y(1)=1 always.
        assert!((probability_of_sufficiency(&scm, 0, 1, 1).unwrap() - 1.0).abs() < 1e-15);
        // PNS = P(Z=1,Y=1)·PN + P(Z=0,Y=0)·PS.
        let pns = exact_poc(&scm, 0, 1, 1, PocKind::Marginal, None).unwrap();
        assert!((pns - (0.5 * 0.5 + 0.25 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn validation_errors() {
        let bad_sum = DiscreteScm::new(vec![node("Z", vec![], vec![0, 1], vec![0.5, 0.6], vec![0, 1])], 0);
        assert!(matches!(bad_sum, Err(PocError::InvalidScm(_))));
        let bad_table = DiscreteScm::new(vec![node("Z", vec![], vec![0, 1], vec![1.0], vec![0, 1])], 0);
        assert!(matches!(bad_table, Err(PocError::InvalidScm(_))));
        let off_domain = DiscreteScm::new(vec![node("Z", vec![], vec![0, 1], vec![1.0], vec![3])], 0);
        assert!(matches!(off_domain, Err(PocError::InvalidScm(_))));
        let cyclic = DiscreteScm::new(
            vec![
                node("A", vec![1], vec![0, 1], vec![1.0], vec![0, 1]),
                node("B", vec![0], vec![0, 1], vec![1.0], vec![0, 1]),
                node("Y", vec![], vec![0], vec![1.0], vec![0]),
            ],
            2,
        );
        assert!(matches!(cyclic, Err(PocError::Graph(_))));
        let outcome_parent = DiscreteScm::new(
            vec![
                node("Y", vec![], vec![0, 1], vec![0.5, 0.5], vec![0, 1]),
                node("Z", vec![0], vec![0, 1], vec![1.0], vec![0, 1]),
            ],
            0,
        );
        assert!(matches!(
            outcome_parent,
            Err(PocError::Graph(GraphError::OutcomeHasChild { .. }))
        ));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let scm = copy_scm(0.5);
        let err = exact_poc_capped(&scm, 0, 1, 1, PocKind::Marginal, None, 1).unwrap_err();
        assert!(matches!(err, PocError::EnumerationCap { states: 2, cap: 1 }));
    }

    #[test]
    fn conditional_kind_requires_full_context() {
        let scm = xor_scm();
        assert!(matches!(
            exact_poc(&scm, 0, 1, 1, PocKind::Conditional, Some(&[])),
            Err(PocError::Conditioning(_))
        ));
        assert!(matches!(
            exact_poc(&scm, 0, 1, 1, PocKind::Conditional, None),
            Err(PocError::Conditioning(_))
        ));
        assert!(exact_poc(&scm, 0, 1, 1, PocKind::Conditional, Some(&[(1, 0)])).is_ok());
    }

    #[test]
    fn json_round_trip_and_schema() {
        let scm = xor_scm();
        let text = serde_json::to_string(&scm).unwrap();
        let back: DiscreteScm = serde_json::from_str(&text).unwrap();
        assert_eq!(back, scm);
        let doc = r#"{"nodes": [
            {"label": "Z", "domain": [0, 1], "noise": [0.5, 0.5], "table": [0, 1]},
            {"label": "Y", "parents": [0], "domain": [0, 1], "noise": [1.0], "table": [0, 1]}
        ], "outcome": 1}"#;
        let parsed: DiscreteScm = serde_json::from_str(doc).unwrap();
        assert_eq!(parsed.graph().edge_count(), 1);
        let broken = doc.replace("[0.5, 0.5]", "[0.5, 0.2]");
        assert!(serde_json::from_str::<DiscreteScm>(&broken).is_err());
    }

    struct Fixed(f64);

    impl ConditionalProbability for Fixed {
        fn conditional(&self, _y: i64, given: &[Condition]) -> Option<f64> {
            Some(match given[0] {
                Condition::Eq(..) => self.0,
                Condition::Ne(..) => 0.0,
            })
        }
    }

    #[test]
    fn empirical_single_factor_and_annihilation() {
        let data = dataset(&[[1.0, 1.0]]);
        let est = empirical_mpoc(&data, 0, &Fixed(0.8)).unwrap();
        assert!((est.value - 0.8).abs() < 1e-15);
        assert!((est.geometric_mean - 0.8).abs() < 1e-15);
        let zero = empirical_mpoc(&data, 0, &Fixed(0.0)).unwrap();
        assert_eq!(zero.log_value, f64::NEG_INFINITY);
        assert_eq!(zero.value, 0.0);
        let c = empirical_cpoc(&data, 0, &[0], &Fixed(0.8)).unwrap();
        assert!((c.value - 0.8).abs() < 1e-15);
        let out_of_range = empirical_mpoc(&data, 0, &Fixed(1.5)).unwrap_err();
        assert!(matches!(out_of_range, PocError::InvalidProbability(_)));
    }

    #[test]
    fn empirical_perfect_copy_is_one() {
        let rows: Vec<[f64; 2]> = (0..500).map(|j| [(j % 2) as f64, (j % 2) as f64]).collect();
        let data = dataset(&rows);
        let model = FrequencyModel::fit(&data, 0.0).unwrap();
        let m = empirical_mpoc(&data, 0, &model).unwrap();
        assert_eq!(m.value, 1.0);
        let c = empirical_cpoc(&data, 0, &[0], &model).unwrap();
        assert_eq!(c.value, 1.0);
    }

    #[test]
    fn empirical_frequencies_match_hand_count() {
        // Z=1: Y=1 in 3 of 4; Z=0: Y=1 in 1 of 4.
        let data = dataset(&[
            [1.0, 1.0],
            [1.0, 1.0],
            [1.0, 1.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, 0.0],
        ]);
        let model = FrequencyModel::fit(&data, 0.0).unwrap();
        let est = empirical_mpoc(&data, 0, &model).unwrap();
        // Every factor is |3/4 − 1/4| = 1/2.
        assert!((est.log_value - 8.0 * 0.5f64.ln()).abs() < 1e-12);
        let smoothed = FrequencyModel::laplace(&data).unwrap();
        // (3 + 1)/(4 + 2) − (1 + 1)/(4 + 2) = 1/3 for every row.
        let est = empirical_mpoc(&data, 0, &smoothed).unwrap();
        assert!((est.geometric_mean - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_integral_data_is_rejected() {
        let data = dataset(&[[0.5, 1.0]]);
        assert!(matches!(
            FrequencyModel::laplace(&data),
            Err(PocError::NonIntegral { row: 0, col: 0, .. })
        ));
    }

    #[test]
    fn generator_forms() {
        for seed in 0..20 {
            let m = random_binary_scm(3, OutcomeForm::Monotone, seed);
            assert!(m.node(3).parents.contains(&0));
            assert!(m.node(0).parents.is_empty());
            let a = random_binary_scm(3, OutcomeForm::Additive, seed);
            assert!(a.node(3).domain.iter().all(|&v| v >= 0));
            let r = random_binary_scm(3, OutcomeForm::Arbitrary, seed);
            assert_eq!(r.node(3).domain, vec![0, 1]);
        }
    }
}
