use super::{GraphError, WeightedDag};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// Directed edges `(from, to) -> weight` over `dim` nodes, without self-loops.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeSet {
    dim: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

impl EdgeSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            edges: BTreeMap::new(),
        }
    }

    /// Edges with `|b| > threshold`.
    pub fn from_dag(g: &WeightedDag, threshold: f64) -> Self {
        let mut set = Self::new(g.dim());
        for i in 0..g.dim() {
            for j in 0..g.dim() {
                let w = g.weight(i, j);
                if w.abs() > threshold {
                    set.edges.insert((i, j), w);
                }
            }
        }
        set
    }

    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut set = Self::new(dim);
        for (i, j) in pairs {
            set.insert(i, j, 1.0)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, from: usize, to: usize, weight: f64) -> Result<(), GraphError> {
        if from >= self.dim || to >= self.dim {
            return Err(GraphError::NodeOutOfRange {
                node: from.max(to),
                dim: self.dim,
            });
        }
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        self.edges.insert((from, to), weight);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.edges.contains_key(&(from, to))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges.keys().map(|&(i, j)| (i.min(j), i.max(j))).collect()
    }

    /// Orientations present on the unordered pair `a < b`: (a->b, b->a).
    fn orientation(&self, a: usize, b: usize) -> (bool, bool) {
        (self.contains(a, b), self.contains(b, a))
    }
}

/// Structural comparison of an estimated edge set against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub fdr: f64,
    pub tpr: f64,
    pub shd: usize,
}

/// FDR counts reversed and absent-from-truth estimated edges as false
/// discoveries. SHD counts, per unordered node pair, one operation whenever
/// the two graphs disagree on that pair (missing, extra, or reversed).
pub fn metrics(estimated: &EdgeSet, truth: &EdgeSet) -> Result<Metrics, GraphError> {
    if estimated.dim() != truth.dim() {
        return Err(GraphError::DimensionMismatch(estimated.dim(), truth.dim()));
    }
    let true_positives = estimated.iter().filter(|&(i, j, _)| truth.contains(i, j)).count();
    let false_discoveries = estimated.len() - true_positives;

    let pairs: BTreeSet<(usize, usize)> = estimated.skeleton().union(&truth.skeleton()).copied().collect();
    let shd = pairs
        .into_iter()
        .filter(|&(a, b)| estimated.orientation(a, b) != truth.orientation(a, b))
        .count();

    Ok(Metrics {
        fdr: false_discoveries as f64 / estimated.len().max(1) as f64,
        tpr: true_positives as f64 / truth.len().max(1) as f64,
        shd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(dim: usize, pairs: &[(usize, usize)]) -> EdgeSet {
        EdgeSet::from_pairs(dim, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn identical_sets() {
        let a = set(4, &[(0, 1), (1, 3), (2, 3)]);
        assert_eq!(
            metrics(&a, &a).unwrap(),
            Metrics {
                fdr: 0.0,
                tpr: 1.0,
                shd: 0
            }
        );
    }

    #[test]
    fn empty_estimate() {
        let truth = set(4, &[(0, 1), (1, 3), (2, 3)]);
        let m = metrics(&EdgeSet::new(4), &truth).unwrap();
        assert_eq!(
            m,
            Metrics {
                fdr: 0.0,
                tpr: 0.0,
                shd: 3
            }
        );
    }

    #[test]
    fn single_reversal() {
        let m = metrics(&set(2, &[(1, 0)]), &set(2, &[(0, 1)])).unwrap();
        assert_eq!(
            m,
            Metrics {
                fdr: 1.0,
                tpr: 0.0,
                shd: 1
            }
        );
    }

    #[test]
    fn mixed_errors() {
        // truth: 0->1, 1->2, 2->3 ; estimate: 0->1 (tp), 2->1 (rev), 0->3 (extra)
        let truth = set(4, &[(0, 1), (1, 2), (2, 3)]);
        let est = set(4, &[(0, 1), (2, 1), (0, 3)]);
        let m = metrics(&est, &truth).unwrap();
        assert_eq!(m.shd, 3);
        assert!((m.fdr - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.tpr - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(metrics(&EdgeSet::new(3), &EdgeSet::new(4)).is_err());
    }

    fn arb_edges() -> impl Strategy<Value = EdgeSet> {
        proptest::collection::vec((0usize..6, 0usize..6), 0..14)
            .prop_map(|pairs| EdgeSet::from_pairs(6, pairs.into_iter().filter(|(i, j)| i != j)).unwrap())
    }

    proptest! {
        #[test]
        fn self_comparison_is_perfect(a in arb_edges()) {
            let m = metrics(&a, &a).unwrap();
            prop_assert_eq!(m.fdr, 0.0);
            prop_assert_eq!(m.shd, 0);
            // An empty truth has no positives to recover.
            prop_assert_eq!(m.tpr, if a.is_empty() { 0.0 } else { 1.0 });
        }

        #[test]
        fn shd_is_symmetric(a in arb_edges(), b in arb_edges()) {
            prop_assert_eq!(metrics(&a, &b).unwrap().shd, metrics(&b, &a).unwrap().shd);
        }

        #[test]
        fn rates_are_bounded(a in arb_edges(), b in arb_edges()) {
            let m = metrics(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.fdr));
            prop_assert!((0.0..=1.0).contains(&m.tpr));
        }
    }
}
