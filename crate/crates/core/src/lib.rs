//! Joint learning of a causal DAG and the subset of features that are
//! necessary and sufficient causes of a designated outcome.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: weighted DAGs, random generators, path enumeration, metrics.
//! - [`scm`]: linear and rounded-log structural equation samplers.
//! - [`effects`]: closed-form direct and total effects under the linear model.
//! - [`poc`]: probabilities of causation, their lower bounds, and estimators.
//! - [`optimizer`]: the constrained least-squares learner with feature selection.
//! - [`mec`]: CPDAGs, Markov-equivalence-class enumeration and averaging.
//! - [`bench`]: scenario presets and the replication harness.
//! - [`io`]: CSV/JSON readers and writers for every artifact.

pub mod bench;
pub mod effects;
pub mod graph;
pub mod io;
pub mod mec;
pub mod optimizer;
pub mod poc;
pub mod scm;

pub use graph::{EdgeSet, GraphError, Metrics, WeightRange, WeightedDag};
