//! `nscsl` command-line front end.
//!
//! Exit codes: 0 on success, 1 when inputs or configuration are invalid,
//! 2 when a run fails. Logs go to standard error.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nscsl::bench::{
    report_effects, run_scenario, true_nscg, truth_graph, Method, RunOptions, ScenarioId, ScenarioSpec,
};
use nscsl::effects::{effect_report, EffectKind};
use nscsl::graph::metrics;
use nscsl::io::{
    load_csv, read_adjacency, read_dataset, read_fit_result, read_json, write_adjacency, write_bench_report,
    write_cpdag, write_dataset, write_effects, write_fit_result, write_json, OutcomeColumn,
};
use nscsl::mec::{dag_to_cpdag, dag_to_cpdag_outcome_sink, enumerate_mec, mec_average, DEFAULT_MEC_CAP};
use nscsl::optimizer::{fit, fit_baseline, FitConfig};
use nscsl::scm::{sample, shift_nonnegative, SemSpec};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "nscsl",
    version,
    about = "Causal structure learning with necessary and sufficient feature selection"
)]
struct Cli {
    /// Seed for data generation and optimizer initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for benchmarks; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// JSON configuration file (sections `scenario` and `fit`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a ground-truth graph and a dataset.
    Simulate(SimulateArgs),
    /// Fit a graph and feature selection to a data file.
    Fit(FitArgs),
    /// Compare an estimated adjacency matrix with the truth.
    Eval(EvalArgs),
    /// Run a benchmark scenario.
    Bench(BenchArgs),
    /// Direct and total effects of a fitted or given graph.
    Effects(EffectsArgs),
    /// CPDAG and equivalence-class average of a graph.
    Mec(MecArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Preset scenario; ignored when the config has a `scenario` section.
    #[arg(long, value_enum, default_value_t = Preset::S1)]
    scenario: Preset,
    /// Sample size; defaults to the scenario's first sample size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Outcome column by label or index; defaults to the last column.
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Effect driving selection; overrides the config.
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Fit without feature selection.
    #[arg(long)]
    baseline: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Estimated adjacency matrix (CSV).
    #[arg(long)]
    estimate: PathBuf,
    /// True adjacency matrix (CSV).
    #[arg(long)]
    truth: PathBuf,
    /// Absolute weight an estimated edge must exceed.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Preset scenario; ignored when the config has a `scenario` section.
    #[arg(long, value_enum, default_value_t = Preset::S1)]
    scenario: Preset,
    /// Replications; overrides the scenario.
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated sample sizes; overrides the scenario.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Comma-separated methods (nscsl-te, nscsl-de, baseline).
    #[arg(long, value_delimiter = ',', value_enum)]
    methods: Option<Vec<MethodArg>>,
    /// Record zeros instead of wall-clock runtimes, for reproducible files.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EffectsArgs {
    /// Fit directory; reports the selected features.
    #[arg(long, conflicts_with = "graph", required_unless_present = "graph")]
    fit: Option<PathBuf>,
    /// Adjacency matrix; reports every feature.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MecArgs {
    /// Adjacency matrix (CSV).
    #[arg(long)]
    graph: PathBuf,
    /// Orient every outcome-incident edge into the outcome first.
    #[arg(long)]
    outcome_sink: bool,
    /// Largest number of members to enumerate.
    #[arg(long, default_value_t = DEFAULT_MEC_CAP)]
    cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl From<Preset> for ScenarioId {
    fn from(p: Preset) -> Self {
        match p {
            Preset::S1 => ScenarioId::S1,
            Preset::S2 => ScenarioId::S2,
            Preset::S3 => ScenarioId::S3,
            Preset::S4 => ScenarioId::S4,
            Preset::S5 => ScenarioId::S5,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Te,
    De,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    NscslTe,
    NscslDe,
    Baseline,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::NscslTe => Method::NscslTe,
            MethodArg::NscslDe => Method::NscslDe,
            MethodArg::Baseline => Method::Baseline,
        }
    }
}

/// Contents of `--config`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    /// Used by `simulate` and `bench`.
    scenario: Option<ScenarioSpec>,
    /// Used by `fit`.
    fit: Option<FitConfig>,
}

enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain, skipping causes the previous message already contains.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !last.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config: ConfigFile = match &cli.config {
        Some(path) => read_json(path).invalid()?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Simulate(args) => simulate(cli, &config, args),
        Command::Fit(args) => fit_cmd(cli, &config, args),
        Command::Eval(args) => eval(args),
        Command::Bench(args) => bench(cli, &config, args),
        Command::Effects(args) => effects(args),
        Command::Mec(args) => mec(args),
    }
}

fn scenario(config: &ConfigFile, preset: Preset) -> ScenarioSpec {
    config
        .scenario
        .clone()
        .unwrap_or_else(|| ScenarioSpec::preset(preset.into()))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .runtime()
}

fn simulate(cli: &Cli, config: &ConfigFile, args: &SimulateArgs) -> Result<(), Failure> {
    let mut spec = scenario(config, args.scenario);
    if let Some(n) = args.n {
        spec.sample_sizes = vec![n];
    }
    spec.validate().invalid()?;
    let n = spec.sample_sizes[0];
    let seed = cli.seed.unwrap_or(spec.seed_base);
    let truth = truth_graph(&spec).invalid()?;
    let sem = SemSpec::new(truth.clone(), spec.noise, spec.link).invalid()?;
    let data = shift_nonnegative(&sample(&sem, n, seed).runtime()?);
    create_dir(&args.out)?;
    write_adjacency(args.out.join("truth.csv"), &truth).runtime()?;
    write_adjacency(args.out.join("nscg.csv"), &true_nscg(&truth)).runtime()?;
    write_dataset(args.out.join("data.csv"), &data).runtime()?;
    let meta = json!({
        "command": "simulate",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "n": n,
        "scenario": spec,
    });
    write_json(args.out.join("meta.json"), &meta).runtime()?;
    log::info!(
        "wrote {} observations of {} variables to {}",
        n,
        truth.dim(),
        args.out.display()
    );
    Ok(())
}

fn fit_cmd(cli: &Cli, config: &ConfigFile, args: &FitArgs) -> Result<(), Failure> {
    let mut cfg = config.fit.clone().unwrap_or_default();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = args.kind {
        cfg.effect_kind = match kind {
            Kind::Te => EffectKind::Total,
            Kind::De => EffectKind::Direct,
        };
    }
    cfg.validate().invalid()?;
    let data = match &args.outcome {
        Some(col) => {
            let Ok(column) = col.parse::<OutcomeColumn>();
            load_csv(&args.data, &column)
        }
        None => read_dataset(&args.data),
    }
    .invalid()?;
    let result = if args.baseline {
        fit_baseline(&data, &cfg)
    } else {
        fit(&data, &cfg)
    }
    .runtime()?;
    let meta = json!({
        "command": "fit",
        "version": env!("CARGO_PKG_VERSION"),
        "data": args.data,
        "outcome": data.labels()[data.outcome()],
        "baseline": args.baseline,
        "config": cfg,
        "delta_star": result.delta_star_used,
        "converged": result.converged,
        "selected": result.selected_indices(),
    });
    write_fit_result(&args.out, &result, &meta).runtime()?;
    if !result.converged {
        log::warn!("dual ascent stopped before reaching the tolerances");
    }
    Ok(())
}

/// Writes CSV text to `out` or standard output.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .runtime(),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing standard output")
            .runtime(),
    }
}

fn eval(args: &EvalArgs) -> Result<(), Failure> {
    let estimate = read_adjacency(&args.estimate).invalid()?;
    let truth = read_adjacency(&args.truth).invalid()?;
    if estimate.dim() != truth.dim() {
        return Err(Failure::Invalid(anyhow!(
            "estimate has {} nodes, truth has {}",
            estimate.dim(),
            truth.dim()
        )));
    }
    if !(args.threshold.is_finite() && args.threshold >= 0.0) {
        return Err(Failure::Invalid(anyhow!("threshold must be finite and nonnegative")));
    }
    let est = estimate.edge_set(args.threshold);
    let mut text = String::from("target,fdr,tpr,shd,edges\n");
    for (name, target) in [("nscg", true_nscg(&truth)), ("full", truth)] {
        let m = metrics(&est, &target.edge_set(0.0)).invalid()?;
        text.push_str(&format!("{name},{},{},{},{}\n", m.fdr, m.tpr, m.shd, est.len()));
    }
    emit(args.out.as_deref(), &text)
}

fn bench(cli: &Cli, config: &ConfigFile, args: &BenchArgs) -> Result<(), Failure> {
    let mut spec = scenario(config, args.scenario);
    if let Some(r) = args.reps {
        spec.replications = r;
    }
    if let Some(n) = &args.n {
        spec.sample_sizes = n.clone();
    }
    if let Some(m) = &args.methods {
        spec.methods = m.iter().map(|&m| m.into()).collect();
    }
    if let Some(seed) = cli.seed {
        spec.seed_base = seed;
    }
    spec.validate().invalid()?;
    let options = RunOptions {
        threads: cli.threads,
        timing: !args.no_timing,
    };
    let report = run_scenario(&spec, options).runtime()?;
    write_bench_report(&args.out, &report).runtime()?;
    let meta = json!({
        "command": "bench",
        "version": env!("CARGO_PKG_VERSION"),
        "timing": options.timing,
        "scenario": spec,
    });
    write_json(args.out.join("meta.json"), &meta).runtime()?;
    for row in &report.rows {
        log::info!(
            "{} {} {:?} n={}: fdr {:.3} tpr {:.3} shd {:.3} ({} failures)",
            row.scenario,
            row.method,
            row.target,
            row.n,
            row.fdr_mean,
            row.tpr_mean,
            row.shd_mean,
            row.failures
        );
    }
    Ok(())
}

fn effects(args: &EffectsArgs) -> Result<(), Failure> {
    let report = match (&args.fit, &args.graph) {
        (Some(dir), _) => {
            let (graph, selected) = read_fit_result(dir).invalid()?;
            report_effects(&graph, &selected).invalid()?
        }
        (None, Some(path)) => effect_report(&read_adjacency(path).invalid()?).invalid()?,
        (None, None) => return Err(Failure::Invalid(anyhow!("pass --fit or --graph"))),
    };
    match &args.out {
        Some(path) => write_effects(path, &report).runtime(),
        None => {
            let mut text = String::from("node,label,direct_effect,total_effect\n");
            for r in &report.records {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    r.node,
                    csv_field(&r.label),
                    r.direct_effect,
                    r.total_effect
                ));
            }
            emit(None, &text)
        }
    }
}

/// Quotes a label when it would break a CSV row.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn mec(args: &MecArgs) -> Result<(), Failure> {
    if args.cap == 0 {
        return Err(Failure::Invalid(anyhow!("cap must be positive")));
    }
    let graph = read_adjacency(&args.graph).invalid()?;
    let cpdag = if args.outcome_sink {
        dag_to_cpdag_outcome_sink(&graph)
    } else {
        dag_to_cpdag(&graph)
    }
    .invalid()?;
    let members = enumerate_mec(&cpdag, args.cap).runtime()?;
    let average = mec_average(&members).runtime()?;
    create_dir(&args.out)?;
    write_cpdag(args.out.join("cpdag.csv"), &cpdag).runtime()?;
    let avg_graph_labels = graph.labels().to_vec();
    let mut text = avg_graph_labels
        .iter()
        .map(|l| csv_field(l))
        .collect::<Vec<_>>()
        .join(",");
    text.push('\n');
    for row in average.row_iter() {
        text.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    emit(Some(&args.out.join("average.csv")), &text)?;
    let meta = json!({
        "command": "mec",
        "version": env!("CARGO_PKG_VERSION"),
        "graph": args.graph,
        "outcome_sink": args.outcome_sink,
        "members": members.len(),
    });
    write_json(args.out.join("meta.json"), &meta).runtime()
}
