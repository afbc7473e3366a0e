//! Markov equivalence classes: CPDAGs, member enumeration, averaging.
//!
//! Members are returned as 0/1 adjacency matrices rather than
//! [`WeightedDag`]s because, without the outcome-sink background knowledge,
//! an equivalence class contains graphs in which the outcome has children.
//! [`members_as_graphs`] converts them when that does not happen.

use crate::graph::{GraphError, WeightedDag};
use nalgebra::DMatrix;
use thiserror::Error;

/// Default bound on the number of enumerated members.
pub const DEFAULT_MEC_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum MecError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid CPDAG: {0}")]
    Invalid(String),
    #[error("the equivalence class has more than {cap} members")]
    CapExceeded { cap: usize },
    #[error("cannot average an empty list of members")]
    Empty,
    #[error("member has dimension {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("member {member} gives the outcome a child; apply the outcome-sink knowledge first")]
    OutcomeNotSink { member: usize },
}

/// Completed partially directed acyclic graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpdag {
    labels: Vec<String>,
    outcome: usize,
    // Row-major `dim × dim`; `dir[i*dim + j]` is i → j, `und` is symmetric.
    dir: Vec<bool>,
    und: Vec<bool>,
}

impl Cpdag {
    /// Builds a CPDAG from directed `(from, to)` and undirected `(a, b)` edges.
    pub fn new(
        labels: Vec<String>,
        outcome: usize,
        directed: &[(usize, usize)],
        undirected: &[(usize, usize)],
    ) -> Result<Self, MecError> {
        let dim = labels.len();
        if dim == 0 {
            return Err(MecError::Invalid("no nodes".into()));
        }
        if outcome >= dim {
            return Err(MecError::Graph(GraphError::OutcomeOutOfRange { outcome, dim }));
        }
        let mut c = Self {
            labels,
            outcome,
            dir: vec![false; dim * dim],
            und: vec![false; dim * dim],
        };
        for &(i, j) in directed.iter().chain(undirected) {
            if i >= dim || j >= dim {
                return Err(MecError::Graph(GraphError::NodeOutOfRange { node: i.max(j), dim }));
            }
            if i == j {
                return Err(MecError::Graph(GraphError::SelfLoop(i)));
            }
        }
        for &(i, j) in directed {
            c.dir[i * dim + j] = true;
        }
        for &(i, j) in undirected {
            if c.dir[i * dim + j] || c.dir[j * dim + i] {
                return Err(MecError::Invalid(format!(
                    "edge {i}-{j} is both directed and undirected"
                )));
            }
            c.und[i * dim + j] = true;
            c.und[j * dim + i] = true;
        }
        for i in 0..dim {
            for j in 0..i {
                if c.dir[i * dim + j] && c.dir[j * dim + i] {
                    return Err(MecError::Invalid(format!("edge {i}-{j} is directed both ways")));
                }
            }
        }
        if crate::graph::topological_order(&c.directed_matrix()).is_none() {
            return Err(MecError::Graph(GraphError::Cyclic));
        }
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn is_directed(&self, i: usize, j: usize) -> bool {
        self.dir[i * self.dim() + j]
    }

    pub fn is_undirected(&self, i: usize, j: usize) -> bool {
        self.und[i * self.dim() + j]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.is_directed(i, j) || self.is_directed(j, i) || self.is_undirected(i, j)
    }

    /// Directed edges in row-major order.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let d = self.dim();
        (0..d * d).filter(|&k| self.dir[k]).map(|k| (k / d, k % d)).collect()
    }

    /// Undirected edges as `(a, b)` with `a < b`.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let d = self.dim();
        (0..d * d)
            .filter(|&k| self.und[k] && k / d < k % d)
            .map(|k| (k / d, k % d))
            .collect()
    }

    fn directed_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| if self.dir[i * d + j] { 1.0 } else { 0.0 })
    }

    fn orient(&mut self, i: usize, j: usize) {
        let d = self.dim();
        self.und[i * d + j] = false;
        self.und[j * d + i] = false;
        self.dir[i * d + j] = true;
    }

    /// Applies Meek's rules R1–R4 until no undirected edge changes.
    fn meek_closure(&mut self) {
        let d = self.dim();
        loop {
            let mut changed = false;
            for a in 0..d {
                for b in 0..d {
                    if a != b && self.is_undirected(a, b) && self.compelled(a, b) {
                        self.orient(a, b);
                        changed = true;
                    }
                }
            }
            if !changed {
                return;
            }
        }
    }

    /// Whether some rule forces the undirected edge `a − b` to `a → b`.
    fn compelled(&self, a: usize, b: usize) -> bool {
        let d = self.dim();
        // R1: c → a − b with c, b nonadjacent.
        if (0..d).any(|c| self.is_directed(c, a) && c != b && !self.adjacent(c, b)) {
            return true;
        }
        // R2: a → c → b.
        if (0..d).any(|c| self.is_directed(a, c) && self.is_directed(c, b)) {
            return true;
        }
        // R3: a − c → b and a − e → b with c, e nonadjacent.
        let mids: Vec<usize> = (0..d)
            .filter(|&c| self.is_undirected(a, c) && self.is_directed(c, b))
            .collect();
        for (x, &c) in mids.iter().enumerate() {
            if mids[x + 1..].iter().any(|&e| !self.adjacent(c, e)) {
                return true;
            }
        }
        // R4: a − c, c → e → b, a adjacent to e, c and b nonadjacent.
        for c in 0..d {
            if c == b || !self.is_undirected(a, c) || self.adjacent(c, b) {
                continue;
            }
            if (0..d).any(|e| self.is_directed(c, e) && self.is_directed(e, b) && self.adjacent(a, e)) {
                return true;
            }
        }
        false
    }

    /// Orientation of every undirected edge in `order` plus the directed part.
    fn member_matrix(&self, und_edges: &[(usize, usize)], forward: &[bool]) -> DMatrix<f64> {
        let mut m = self.directed_matrix();
        for (&(a, b), &f) in und_edges.iter().zip(forward) {
            if f {
                m[(a, b)] = 1.0;
            } else {
                m[(b, a)] = 1.0;
            }
        }
        m
    }
}

/// CPDAG of the equivalence class of `g`: skeleton, compelled v-structures,
/// then Meek closure.
pub fn dag_to_cpdag(g: &WeightedDag) -> Result<Cpdag, MecError> {
    to_cpdag(g, false)
}

/// As [`dag_to_cpdag`], with every outcome-incident edge pre-oriented into
/// the outcome before the Meek closure.
pub fn dag_to_cpdag_outcome_sink(g: &WeightedDag) -> Result<Cpdag, MecError> {
    to_cpdag(g, true)
}

fn to_cpdag(g: &WeightedDag, outcome_sink: bool) -> Result<Cpdag, MecError> {
    g.require_acyclic()?;
    let adj = adjacency(g.weights());
    let d = g.dim();
    let vs = v_structure_edges(&adj, d);
    let mut directed = Vec::new();
    let mut undirected = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if !adj[i * d + j] {
                continue;
            }
            if vs[i * d + j] || (outcome_sink && j == g.outcome()) {
                directed.push((i, j));
            } else if i < j || !adj[j * d + i] {
                undirected.push((i.min(j), i.max(j)));
            }
        }
    }
    undirected.sort_unstable();
    undirected.dedup();
    let mut c = Cpdag::new(g.labels().to_vec(), g.outcome(), &directed, &undirected)?;
    c.meek_closure();
    Ok(c)
}

fn adjacency(w: &DMatrix<f64>) -> Vec<bool> {
    let d = w.nrows();
    let mut adj = vec![false; d * d];
    for i in 0..d {
        for j in 0..d {
            adj[i * d + j] = w[(i, j)] != 0.0;
        }
    }
    adj
}

/// Marks edges `i → j` that belong to a collider `i → j ← k` with `i`, `k`
/// nonadjacent.
fn v_structure_edges(adj: &[bool], d: usize) -> Vec<bool> {
    let linked = |a: usize, b: usize| adj[a * d + b] || adj[b * d + a];
    let mut marks = vec![false; d * d];
    for j in 0..d {
        for i in 0..d {
            if !adj[i * d + j] {
                continue;
            }
            for k in (i + 1)..d {
                if adj[k * d + j] && !linked(i, k) {
                    marks[i * d + j] = true;
                    marks[k * d + j] = true;
                }
            }
        }
    }
    marks
}

/// Every DAG in the class: each acyclic orientation of the undirected edges
/// that creates no new v-structure. Fails once more than `cap` are found.
pub fn enumerate_mec(c: &Cpdag, cap: usize) -> Result<Vec<DMatrix<f64>>, MecError> {
    let d = c.dim();
    let edges = c.undirected_edges();
    let mut state = Search {
        d,
        dir: c.dir.clone(),
        und: c.und.clone(),
        edges: &edges,
        forward: vec![false; edges.len()],
        members: Vec::new(),
        cap,
    };
    state.extend(0, c)?;
    Ok(state.members)
}

struct Search<'a> {
    d: usize,
    dir: Vec<bool>,
    und: Vec<bool>,
    edges: &'a [(usize, usize)],
    forward: Vec<bool>,
    members: Vec<DMatrix<f64>>,
    cap: usize,
}

impl Search<'_> {
    fn adjacent(&self, a: usize, b: usize) -> bool {
        let d = self.d;
        self.dir[a * d + b] || self.dir[b * d + a] || self.und[a * d + b]
    }

    /// Whether `from → to` can be added: no directed path `to ⇝ from` and no
    /// new collider at `to`.
    fn admissible(&self, from: usize, to: usize) -> bool {
        let d = self.d;
        if (0..d).any(|x| x != from && self.dir[x * d + to] && !self.adjacent(x, from)) {
            return false;
        }
        let mut seen = vec![false; d];
        let mut stack = vec![to];
        while let Some(v) = stack.pop() {
            if v == from {
                return false;
            }
            for w in 0..d {
                if self.dir[v * d + w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        true
    }

    fn extend(&mut self, k: usize, c: &Cpdag) -> Result<(), MecError> {
        if k == self.edges.len() {
            if self.members.len() == self.cap {
                return Err(MecError::CapExceeded { cap: self.cap });
            }
            self.members.push(c.member_matrix(self.edges, &self.forward));
            return Ok(());
        }
        let (a, b) = self.edges[k];
        let d = self.d;
        for (from, to, fwd) in [(a, b, true), (b, a, false)] {
            if !self.admissible(from, to) {
                continue;
            }
            self.und[a * d + b] = false;
            self.und[b * d + a] = false;
            self.dir[from * d + to] = true;
            self.forward[k] = fwd;
            let result = self.extend(k + 1, c);
            self.dir[from * d + to] = false;
            self.und[a * d + b] = true;
            self.und[b * d + a] = true;
            result?;
        }
        Ok(())
    }
}

/// Entrywise mean of the members.
pub fn mec_average(members: &[DMatrix<f64>]) -> Result<DMatrix<f64>, MecError> {
    let first = members.first().ok_or(MecError::Empty)?;
    let d = first.nrows();
    let mut sum = DMatrix::zeros(d, d);
    for m in members {
        if m.nrows() != d || m.ncols() != d {
            return Err(MecError::DimMismatch {
                expected: d,
                got: m.nrows(),
            });
        }
        sum += m;
    }
    Ok(sum / members.len() as f64)
}

/// Members as unit-weight graphs carrying the CPDAG's labels and outcome.
pub fn members_as_graphs(c: &Cpdag, members: &[DMatrix<f64>]) -> Result<Vec<WeightedDag>, MecError> {
    members
        .iter()
        .enumerate()
        .map(|(k, m)| {
            if m.row(c.outcome()).iter().any(|&w| w != 0.0) {
                return Err(MecError::OutcomeNotSink { member: k });
            }
            Ok(WeightedDag::with_outcome(m.clone(), c.labels().to_vec(), c.outcome())?)
        })
        .collect()
}
