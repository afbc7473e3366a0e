use nalgebra::DMatrix;
use nscsl::bench::{
    report_effects, report_fit_effects, run_scenario, summarize, Method, RunOptions, ScenarioId, ScenarioSpec,
};
use nscsl::effects::effect_report;
use nscsl::io::{
    load_csv, read_adjacency, read_cpdag, read_dataset, read_diagnostics, read_edges, read_fit_result, read_json,
    read_replications, read_summary, write_adjacency, write_bench_report, write_cpdag, write_dataset, write_edges,
    write_effects, write_fit_result, IoError, OutcomeColumn,
};
use nscsl::mec::dag_to_cpdag;
use nscsl::optimizer::{fit, FitConfig};
use nscsl::scm::{sample, Dataset, Noise, SemSpec};
use nscsl::WeightedDag;
use std::fs;
use tempfile::tempdir;

fn chain() -> WeightedDag {
    WeightedDag::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
}

#[test]
fn dataset_round_trip_is_exact() {
    let spec = SemSpec::linear(
        chain(),
        Noise::Gaussian {
            sigma: 1.0,
            equal_variance: true,
        },
    )
    .unwrap();
    let data = sample(&spec, 50, 7).unwrap();
    let dir = tempdir().unwrap();
    let path = dir.path().join("data.csv");
    write_dataset(&path, &data).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), data);
    let loaded = load_csv(&path, &OutcomeColumn::Label(data.labels()[2].clone())).unwrap();
    assert_eq!(loaded, data);
}

#[test]
fn load_csv_moves_the_outcome_last() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("raw.csv");
    fs::write(&path, "A,Y,B\n1,2,3\n4,5,6\n").unwrap();
    let by_label = load_csv(&path, &OutcomeColumn::Label("Y".into())).unwrap();
    assert_eq!(by_label.labels(), ["A", "B", "Y"]);
    assert_eq!(by_label.outcome(), 2);
    assert_eq!(by_label.column(2), vec![2.0, 5.0]);
}

#[test]
fn load_csv_by_index_keeps_labels() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("raw.csv");
    fs::write(&path, "A,Y,B\n1,2,3\n4,5,6\n").unwrap();
    let d = load_csv(&path, &OutcomeColumn::Index(0)).unwrap();
    assert_eq!(d.labels(), ["Y", "B", "A"]);
    assert_eq!(d.column(0), vec![2.0, 5.0]);
    assert_eq!(d.column(2), vec![1.0, 4.0]);
}

#[test]
fn load_csv_errors_name_the_cell() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "A,B,Y\n1,2,3\n4,,6\n").unwrap();
    match load_csv(&path, &OutcomeColumn::Label("Y".into())) {
        Err(IoError::Cell { row, col, label, .. }) => assert_eq!((row, col, label.as_str()), (2, 2, "B")),
        other => panic!("unexpected {other:?}"),
    }
    fs::write(&path, "A,B,Y\n1,x,3\n").unwrap();
    let err = load_csv(&path, &OutcomeColumn::Label("Y".into())).unwrap_err();
    assert!(err.to_string().contains("row 1, column 2 (B)"), "{err}");
    fs::write(&path, "A,B,Y\n1,2,3\n").unwrap();
    assert!(matches!(
        load_csv(&path, &OutcomeColumn::Label("Z".into())),
        Err(IoError::UnknownColumn(_))
    ));
    fs::write(&path, "A,A,Y\n1,2,3\n").unwrap();
    assert!(matches!(
        load_csv(&path, &OutcomeColumn::Index(2)),
        Err(IoError::DuplicateLabel { .. })
    ));
}

#[test]
fn graph_formats_round_trip() {
    let g = WeightedDag::from_edges(4, [(0, 1, 0.75), (1, 3, -1.25), (2, 3, 1e-3)]).unwrap();
    let dir = tempdir().unwrap();
    let adj = dir.path().join("g.csv");
    write_adjacency(&adj, &g).unwrap();
    assert_eq!(read_adjacency(&adj).unwrap(), g);
    let edges = dir.path().join("edges.csv");
    write_edges(&edges, &g).unwrap();
    let text = fs::read_to_string(&edges).unwrap();
    assert!(text.starts_with("from,to,weight\n"));
    assert_eq!(read_edges(&edges, g.labels()).unwrap(), g);
    let c = dag_to_cpdag(&g).unwrap();
    let cp = dir.path().join("cpdag.csv");
    write_cpdag(&cp, &c).unwrap();
    assert!(fs::read_to_string(&cp).unwrap().starts_with("from,to,kind\n"));
    assert_eq!(read_cpdag(&cp, g.labels(), g.outcome()).unwrap(), c);
}

#[test]
fn effects_tables() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("effects.csv");
    let g = chain();
    write_effects(&path, &report_effects(&g, &[false, false, false]).unwrap()).unwrap();
    assert_eq!(
        fs::read_to_string(&path).unwrap(),
        "node,label,direct_effect,total_effect\n"
    );
    write_effects(&path, &effect_report(&g).unwrap()).unwrap();
    assert_eq!(
        fs::read_to_string(&path).unwrap(),
        "node,label,direct_effect,total_effect\n0,X0,0,1\n1,X1,1,1\n"
    );
}

#[test]
fn fit_directory_and_effect_report() {
    // Chain 0 → 1 → Y with unit weights and Gaussian noise.
    let spec = SemSpec::linear(
        chain(),
        Noise::Gaussian {
            sigma: 1.0,
            equal_variance: true,
        },
    )
    .unwrap();
    let data = sample(&spec, 500, 3).unwrap();
    let result = fit(&data, &FitConfig::default()).unwrap();
    let dir = tempdir().unwrap();
    let meta = serde_json::json!({"converged": result.converged});
    write_fit_result(dir.path(), &result, &meta).unwrap();
    let (graph, selected) = read_fit_result(dir.path()).unwrap();
    assert_eq!(graph, result.graph);
    assert_eq!(selected, result.selected);
    assert_eq!(
        read_diagnostics(dir.path().join("diagnostics.csv")).unwrap(),
        result.diagnostics
    );
    assert_eq!(
        read_json::<serde_json::Value>(dir.path().join("meta.json")).unwrap(),
        meta
    );

    let report = report_fit_effects(&result).unwrap();
    let zero = report.records.iter().find(|r| r.node == 0).expect("node 0 selected");
    assert!(zero.direct_effect.abs() < 1e-12);
    assert!((zero.total_effect - 1.0).abs() < 0.2, "{zero:?}");
}

#[test]
fn bench_summary_recomputes_from_raw_rows() {
    let mut spec = ScenarioSpec::preset(ScenarioId::S1);
    spec.sample_sizes = vec![30];
    spec.replications = 3;
    spec.methods = vec![Method::NscslTe, Method::Baseline];
    let report = run_scenario(
        &spec,
        RunOptions {
            threads: 1,
            timing: true,
        },
    )
    .unwrap();
    let dir = tempdir().unwrap();
    write_bench_report(dir.path(), &report).unwrap();
    let raw = read_replications(dir.path().join("raw.csv")).unwrap();
    assert_eq!(raw, report.raw);
    let summary = read_summary(dir.path().join("summary.csv")).unwrap();
    let recomputed = summarize(&raw);
    assert_eq!(recomputed.len(), summary.len());
    for (a, b) in recomputed.iter().zip(&summary) {
        for (x, y) in [
            (a.fdr_mean, b.fdr_mean),
            (a.fdr_se, b.fdr_se),
            (a.tpr_mean, b.tpr_mean),
            (a.tpr_se, b.tpr_se),
            (a.shd_mean, b.shd_mean),
            (a.shd_se, b.shd_se),
            (a.runtime_mean, b.runtime_mean),
            (a.runtime_se, b.runtime_se),
        ] {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn integer_matrix_dataset_writes_plain_numbers() {
    let values = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.5, -3.0]);
    let data = Dataset::new(values, vec!["Z".into(), "Y".into()], 1).unwrap();
    let dir = tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&path, &data).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "Z,Y\n0,1\n2.5,-3\n");
}
