//! Scenario presets and the replication harness.
//!
//! Preset layouts (feature indices; the outcome is the last node):
//!
//! - S1: `1→2, 1→4, 2→4, 3→4` plus the spurious node 0 with `1→0, 2→0`.
//! - S2: `1→2, 2→4` plus spurious nodes 0 and 3 with `1→0, 2→3, 0→3`.
//! - S3: `0→1, 0→4, 1→4, 2→3, 3→4`, no spurious node.
//! - S4: roots `0→1, 0→19, 1→19` and 17 spurious descendants of 0 and 1
//!   arranged in three layers, about 50 edges in total.
//! - S5: 50-node scale-free (or ER) graph from the generic generators.
//!
//! Weights are drawn once per scenario from `weight_range` using
//! `layout_seed`; replication `r` samples data with seed `seed_base + r`.

use crate::effects::{effect_report, EffectError, EffectKind, EffectReport};
use crate::graph::{metrics, random_er, random_sf, EdgeSet, GraphError, WeightRange, WeightedDag};
use crate::optimizer::{fit_baseline, fit_with_baseline, FitConfig, FitResult, OptimizerError};
use crate::scm::{sample, shift_nonnegative, Link, Noise, ScmError, SemSpec};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    #[serde(rename = "custom")]
    Custom,
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioId::S1 => "S1",
            ScenarioId::S2 => "S2",
            ScenarioId::S3 => "S3",
            ScenarioId::S4 => "S4",
            ScenarioId::S5 => "S5",
            ScenarioId::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphModel {
    Er,
    Sf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "nscsl-te")]
    NscslTe,
    #[serde(rename = "nscsl-de")]
    NscslDe,
    #[serde(rename = "baseline")]
    Baseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::NscslTe => "nscsl-te",
            Method::NscslDe => "nscsl-de",
            Method::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    /// Number of nodes including the outcome.
    pub p: usize,
    pub graph_model: GraphModel,
    pub expected_degree: f64,
    #[serde(default)]
    pub link: Link,
    #[serde(default)]
    pub noise: Noise,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub weight_range: WeightRange,
    #[serde(default)]
    pub layout_seed: u64,
    #[serde(default)]
    pub fit: FitConfig,
}

impl ScenarioSpec {
    pub fn preset(id: ScenarioId) -> Self {
        let (p, model, degree, sizes) = match id {
            ScenarioId::S1 | ScenarioId::S2 | ScenarioId::S3 => (5, GraphModel::Er, 2.0, vec![30, 100]),
            ScenarioId::S4 => (20, GraphModel::Er, 5.0, vec![300, 1000]),
            ScenarioId::S5 => (50, GraphModel::Sf, 5.0, vec![300, 1000]),
            ScenarioId::Custom => (10, GraphModel::Er, 2.0, vec![100]),
        };
        Self {
            id,
            p,
            graph_model: model,
            expected_degree: degree,
            link: Link::Linear,
            noise: Noise::Bernoulli { p: 0.5 },
            sample_sizes: sizes,
            replications: 50,
            methods: vec![Method::NscslTe, Method::NscslDe, Method::Baseline],
            seed_base: 0,
            weight_range: WeightRange::default(),
            layout_seed: 0,
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Invalid(m));
        if self.methods.is_empty() {
            return bad("methods list is empty".into());
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return bad("sample sizes must be a nonempty list of positive counts".into());
        }
        if self.replications == 0 {
            return bad("replication count must be positive".into());
        }
        let fixed = match self.id {
            ScenarioId::S1 | ScenarioId::S2 | ScenarioId::S3 => Some(5),
            ScenarioId::S4 => Some(20),
            _ => None,
        };
        if let Some(p) = fixed {
            if self.p != p {
                return bad(format!("{} uses a fixed layout with p = {p}, got {}", self.id, self.p));
            }
        }
        if self.p < 2 {
            return bad(format!("p = {} must be at least 2", self.p));
        }
        self.weight_range.validate()?;
        self.noise.validate()?;
        self.fit.validate()?;
        Ok(())
    }
}

fn weighted(dim: usize, edges: &[(usize, usize)], range: WeightRange, seed: u64) -> Result<WeightedDag, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples: Vec<(usize, usize, f64)> = edges.iter().map(|&(i, j)| (i, j, range.sample(&mut rng))).collect();
    WeightedDag::from_edges(dim, triples)
}

/// Two roots feeding the outcome, with 17 spurious descendants in layers of
/// 6, 6 and 5 nodes.
fn s4_edges(seed: u64) -> Vec<(usize, usize)> {
    let y = 19;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0004);
    let mut edges = vec![(0, 1), (0, y), (1, y)];
    let layer1: Vec<usize> = (2..8).collect();
    let layer2: Vec<usize> = (8..14).collect();
    let layer3: Vec<usize> = (14..19).collect();
    for &v in &layer1 {
        let mut parents = vec![0, 1];
        parents.shuffle(&mut rng);
        let k = if rng.random_bool(0.5) { 2 } else { 1 };
        edges.extend(parents[..k].iter().map(|&u| (u, v)));
    }
    let pool2: Vec<usize> = [0, 1].iter().copied().chain(layer1.iter().copied()).collect();
    for &v in &layer2 {
        let mut pool = pool2.clone();
        pool.shuffle(&mut rng);
        edges.extend(pool[..3].iter().map(|&u| (u, v)));
    }
    let pool3: Vec<usize> = layer1.iter().chain(layer2.iter()).copied().collect();
    for &v in &layer3 {
        let mut pool = pool3.clone();
        pool.shuffle(&mut rng);
        edges.extend(pool[..4].iter().map(|&u| (u, v)));
    }
    edges
}

/// The scenario's ground-truth graph; identical for every replication.
pub fn truth_graph(spec: &ScenarioSpec) -> Result<WeightedDag, BenchError> {
    spec.validate()?;
    let range = spec.weight_range;
    let seed = spec.layout_seed;
    let g = match spec.id {
        ScenarioId::S1 => weighted(5, &[(1, 2), (1, 4), (2, 4), (3, 4), (1, 0), (2, 0)], range, seed)?,
        ScenarioId::S2 => weighted(5, &[(1, 2), (2, 4), (1, 0), (2, 3), (0, 3)], range, seed)?,
        ScenarioId::S3 => weighted(5, &[(0, 1), (0, 4), (1, 4), (2, 3), (3, 4)], range, seed)?,
        ScenarioId::S4 => weighted(20, &s4_edges(seed), range, seed)?,
        ScenarioId::S5 | ScenarioId::Custom => match spec.graph_model {
            GraphModel::Er => random_er(spec.p, spec.expected_degree, range, seed)?,
            GraphModel::Sf => {
                let m = ((spec.expected_degree / 2.0).round() as usize).max(1);
                random_sf(spec.p, m, range, seed)?
            }
        },
    };
    Ok(g)
}

/// Subgraph of edges lying on a directed path into the outcome. Nodes are
/// kept (isolated) so indices stay stable.
pub fn true_nscg(truth: &WeightedDag) -> WeightedDag {
    let y = truth.outcome();
    let anc = truth.ancestors(y);
    let dim = truth.dim();
    let weights = DMatrix::from_fn(dim, dim, |i, j| {
        if (j == y || anc[j]) && anc[i] {
            truth.weight(i, j)
        } else {
            0.0
        }
    });
    WeightedDag::with_outcome(weights, truth.labels().to_vec(), y).expect("a subgraph of a valid graph is valid")
}

/// Which graph a row was scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Nscg,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub scenario: String,
    pub method: Method,
    pub target: Target,
    pub n: usize,
    pub replication: usize,
    pub failed: bool,
    pub fdr: f64,
    pub tpr: f64,
    pub shd: f64,
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: Method,
    pub target: Target,
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub fdr_mean: f64,
    pub fdr_se: f64,
    pub tpr_mean: f64,
    pub tpr_se: f64,
    pub shd_mean: f64,
    pub shd_se: f64,
    pub runtime_mean: f64,
    pub runtime_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<SummaryRow>,
    pub raw: Vec<ReplicationRow>,
}

impl BenchReport {
    pub fn row(&self, method: Method, target: Target, n: usize) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.target == target && r.n == n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    /// Record wall-clock runtimes; disable for byte-reproducible output.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: 0,
            timing: true,
        }
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates replication rows into means and standard errors, keyed by
/// (method, target, n) in order of first appearance. Failed rows count
/// toward `failures` only.
pub fn summarize(raw: &[ReplicationRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Method, Target, usize)> = Vec::new();
    for r in raw {
        let key = (r.scenario.clone(), r.method, r.target, r.n);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, method, target, n)| {
            let group: Vec<&ReplicationRow> = raw
                .iter()
                .filter(|r| r.scenario == scenario && r.method == method && r.target == target && r.n == n)
                .collect();
            let ok: Vec<&&ReplicationRow> = group.iter().filter(|r| !r.failed).collect();
            let col = |f: fn(&ReplicationRow) -> f64| mean_se(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (fdr_mean, fdr_se) = col(|r| r.fdr);
            let (tpr_mean, tpr_se) = col(|r| r.tpr);
            let (shd_mean, shd_se) = col(|r| r.shd);
            let (runtime_mean, runtime_se) = col(|r| r.runtime);
            SummaryRow {
                scenario,
                method,
                target,
                n,
                replications: group.len(),
                failures: group.len() - ok.len(),
                fdr_mean,
                fdr_se,
                tpr_mean,
                tpr_se,
                shd_mean,
                shd_se,
                runtime_mean,
                runtime_se,
            }
        })
        .collect()
}

struct Scored {
    method: Method,
    target: Target,
    result: Option<(f64, f64, f64)>,
    runtime: f64,
}

fn score(est: &WeightedDag, truth: &EdgeSet) -> (f64, f64, f64) {
    let m = metrics(&est.edge_set(0.0), truth).expect("same dimension");
    (m.fdr, m.tpr, m.shd as f64)
}

fn run_replication(
    spec: &ScenarioSpec,
    sem: &SemSpec,
    nscg: &EdgeSet,
    full: &EdgeSet,
    n: usize,
    rep: usize,
    timing: bool,
) -> Vec<Scored> {
    let clock = |start: Instant| if timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let data = sample(sem, n, spec.seed_base.wrapping_add(rep as u64)).map(|d| shift_nonnegative(&d));
    let start = Instant::now();
    let baseline: Result<FitResult, BenchError> = data
        .as_ref()
        .map_err(|e| BenchError::Invalid(e.to_string()))
        .and_then(|d| Ok(fit_baseline(d, &spec.fit)?));
    let baseline_time = clock(start);
    if let Err(e) = &baseline {
        log::warn!("{} n={n} rep={rep}: baseline failed: {e}", spec.id);
    }
    let mut out = Vec::new();
    for &method in &spec.methods {
        match method {
            Method::Baseline => {
                for (target, truth) in [(Target::Nscg, nscg), (Target::Full, full)] {
                    out.push(Scored {
                        method,
                        target,
                        result: baseline.as_ref().ok().map(|b| score(&b.graph, truth)),
                        runtime: baseline_time,
                    });
                }
            }
            Method::NscslTe | Method::NscslDe => {
                let kind = if method == Method::NscslTe {
                    EffectKind::Total
                } else {
                    EffectKind::Direct
                };
                let cfg = FitConfig {
                    effect_kind: kind,
                    ..spec.fit.clone()
                };
                let start = Instant::now();
                let fitted = match (&data, &baseline) {
                    (Ok(d), Ok(b)) => fit_with_baseline(d, &cfg, b).map_err(|e| {
                        log::warn!("{} n={n} rep={rep}: {method} failed: {e}", spec.id);
                    }),
                    _ => Err(()),
                };
                out.push(Scored {
                    method,
                    target: Target::Nscg,
                    result: fitted.ok().map(|f| score(&f.graph, nscg)),
                    runtime: baseline_time + clock(start),
                });
            }
        }
    }
    out
}

/// Runs every (sample size, replication, method) combination of a scenario.
pub fn run_scenario(spec: &ScenarioSpec, options: RunOptions) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    let truth = truth_graph(spec)?;
    let sem = SemSpec::new(truth.clone(), spec.noise, spec.link)?;
    let nscg = true_nscg(&truth).edge_set(0.0);
    let full = truth.edge_set(0.0);
    let jobs: Vec<(usize, usize)> = spec
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..spec.replications).map(move |r| (n, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let results: Vec<Vec<Scored>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, r)| run_replication(spec, &sem, &nscg, &full, n, r, options.timing))
            .collect()
    });
    let scenario = spec.id.to_string();
    let mut raw = Vec::new();
    for (&(n, replication), scored) in jobs.iter().zip(results) {
        for s in scored {
            let (fdr, tpr, shd) = s.result.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            raw.push(ReplicationRow {
                scenario: scenario.clone(),
                method: s.method,
                target: s.target,
                n,
                replication,
                failed: s.result.is_none(),
                fdr,
                tpr,
                shd,
                runtime: s.runtime,
            });
        }
    }
    Ok(BenchReport {
        rows: summarize(&raw),
        raw,
    })
}

/// Direct and total effects of the selected features in a fitted graph.
pub fn report_effects(graph: &WeightedDag, selected: &[bool]) -> Result<EffectReport, EffectError> {
    let mut report = effect_report(graph)?;
    report
        .records
        .retain(|r| selected.get(r.node).copied().unwrap_or(false));
    report.source = "pruned fit".to_string();
    Ok(report)
}

/// [`report_effects`] on a fit result.
pub fn report_fit_effects(fit: &FitResult) -> Result<EffectReport, EffectError> {
    report_effects(&fit.graph, &fit.selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_layouts() {
        let s1 = truth_graph(&ScenarioSpec::preset(ScenarioId::S1)).unwrap();
        assert_eq!(s1.edge_count(), 6);
        let nscg = true_nscg(&s1);
        assert_eq!(nscg.edge_count(), 4);
        assert!(nscg.parents(0).is_empty() && nscg.children(0).is_empty());

        let s2 = truth_graph(&ScenarioSpec::preset(ScenarioId::S2)).unwrap();
        assert_eq!(true_nscg(&s2).edge_count(), 2);
        let s3 = truth_graph(&ScenarioSpec::preset(ScenarioId::S3)).unwrap();
        assert_eq!(true_nscg(&s3), s3);

        let s4 = truth_graph(&ScenarioSpec::preset(ScenarioId::S4)).unwrap();
        assert!(s4.is_acyclic());
        assert!((40..=60).contains(&s4.edge_count()), "{} edges", s4.edge_count());
        assert_eq!(true_nscg(&s4).edge_count(), 3);
        assert_eq!(s4.parents(19), vec![0, 1]);
        let anc = s4.ancestors(0);
        for v in 2..19 {
            // every spurious node descends from a root
            assert!(!s4.parents(v).is_empty());
            assert!(!anc[v]);
        }
    }

    #[test]
    fn nscg_properties() {
        for seed in 0..30 {
            let g = random_er(8, 3.0, WeightRange::default(), seed).unwrap();
            let nscg = true_nscg(&g);
            assert!(nscg.is_acyclic());
            assert_eq!(true_nscg(&nscg), nscg);
            let on_path: Vec<bool> = {
                let anc = g.ancestors(g.outcome());
                (0..8).map(|i| anc[i]).collect()
            };
            for i in 0..8 {
                for j in 0..8 {
                    if nscg.has_edge(i, j) {
                        assert!(on_path[i]);
                        assert!(!nscg.enumerate_paths_to_outcome(i).unwrap().is_empty());
                    }
                }
            }
        }
        let lonely = WeightedDag::from_edges(3, [(0, 1, 1.0)]).unwrap();
        assert_eq!(true_nscg(&lonely).edge_count(), 0);
    }

    #[test]
    fn validation() {
        let mut spec = ScenarioSpec::preset(ScenarioId::S1);
        spec.methods.clear();
        assert!(spec.validate().is_err());
        let mut spec = ScenarioSpec::preset(ScenarioId::S4);
        spec.p = 10;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn summary_statistics() {
        let row = |shd: f64, failed: bool| ReplicationRow {
            scenario: "S1".into(),
            method: Method::Baseline,
            target: Target::Full,
            n: 10,
            replication: 0,
            failed,
            fdr: 0.0,
            tpr: 1.0,
            shd,
            runtime: 0.0,
        };
        let rows = summarize(&[row(1.0, false), row(3.0, false), row(f64::NAN, true)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].shd_mean, 2.0);
        assert_eq!(rows[0].shd_se, 1.0);
        assert_eq!(rows[0].failures, 1);
        assert_eq!(rows[0].replications, 3);
    }
}
