use super::{default_labels, GraphError, WeightedDag};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Closed interval edge weights are drawn from. Must not contain zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRange {
    pub low: f64,
    pub high: f64,
}

impl WeightRange {
    pub fn new(low: f64, high: f64) -> Result<Self, GraphError> {
        let range = Self { low, high };
        range.validate()?;
        Ok(range)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.low.is_finite() && self.high.is_finite()) || self.low > self.high {
            return Err(GraphError::InvalidParameter(format!(
                "weight range [{}, {}] is not a finite interval",
                self.low, self.high
            )));
        }
        if self.low <= 0.0 && self.high >= 0.0 {
            return Err(GraphError::InvalidParameter(format!(
                "weight range [{}, {}] contains zero",
                self.low, self.high
            )));
        }
        Ok(())
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.low == self.high {
            self.low
        } else {
            rng.random_range(self.low..=self.high)
        }
    }
}

impl Default for WeightRange {
    fn default() -> Self {
        Self { low: 0.5, high: 2.0 }
    }
}

/// Erdős–Rényi DAG: a uniformly random order of the features followed by the
/// outcome, with each forward pair joined independently with probability
/// `expected_degree / (num_nodes - 1)`.
pub fn random_er(
    num_nodes: usize,
    expected_degree: f64,
    weight_range: WeightRange,
    seed: u64,
) -> Result<WeightedDag, GraphError> {
    if num_nodes < 2 {
        return Err(GraphError::InvalidParameter("ER graph needs at least 2 nodes".into()));
    }
    if !(expected_degree >= 0.0) || expected_degree >= num_nodes as f64 {
        return Err(GraphError::InvalidParameter(format!(
            "expected degree {expected_degree} must lie in [0, {num_nodes})"
        )));
    }
    weight_range.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prob = (expected_degree / (num_nodes - 1) as f64).min(1.0);
    let outcome = num_nodes - 1;
    let mut order: Vec<usize> = (0..outcome).collect();
    order.shuffle(&mut rng);
    order.push(outcome);

    let mut weights = DMatrix::zeros(num_nodes, num_nodes);
    for a in 0..num_nodes {
        for b in a + 1..num_nodes {
            if rng.random_bool(prob) {
                weights[(order[a], order[b])] = weight_range.sample(&mut rng);
            }
        }
    }
    WeightedDag::new(weights, default_labels(num_nodes, outcome))
}

/// Barabási–Albert preferential attachment oriented by arrival order.
///
/// Nodes `0..attachment_degree` form the seed core; every later node attaches
/// to `attachment_degree` distinct earlier nodes chosen with probability
/// proportional to `degree + 1`, and every edge points from the earlier node to
/// the later one. The outcome arrives last.
pub fn random_sf(
    num_nodes: usize,
    attachment_degree: usize,
    weight_range: WeightRange,
    seed: u64,
) -> Result<WeightedDag, GraphError> {
    if attachment_degree == 0 || attachment_degree >= num_nodes {
        return Err(GraphError::InvalidParameter(format!(
            "attachment degree {attachment_degree} must lie in [1, {num_nodes})"
        )));
    }
    weight_range.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = DMatrix::zeros(num_nodes, num_nodes);
    let mut degree = vec![0usize; num_nodes];
    for node in attachment_degree..num_nodes {
        let mut chosen = vec![false; node];
        for _ in 0..attachment_degree {
            let total: usize = (0..node).filter(|&k| !chosen[k]).map(|k| degree[k] + 1).sum();
            let mut ticket = rng.random_range(0..total);
            let target = (0..node)
                .filter(|&k| !chosen[k])
                .find(|&k| {
                    let w = degree[k] + 1;
                    if ticket < w {
                        true
                    } else {
                        ticket -= w;
                        false
                    }
                })
                .expect("ticket falls inside the total weight");
            chosen[target] = true;
        }
        for target in (0..node).filter(|&k| chosen[k]) {
            weights[(target, node)] = weight_range.sample(&mut rng);
            degree[target] += 1;
            degree[node] += 1;
        }
    }
    WeightedDag::new(weights, default_labels(num_nodes, num_nodes - 1))
}
