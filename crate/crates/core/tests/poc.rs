use nalgebra::DMatrix;
use nscsl::poc::{
    empirical_cpoc, empirical_mpoc, exact_poc, poc_lower_bound, random_binary_scm, theorem2_check, DiscreteNode,
    DiscreteScm, FrequencyModel, OutcomeForm, PocError, PocKind,
};
use nscsl::scm::Dataset;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every assignment of binary values to the features other than `i`.
fn contexts(scm: &DiscreteScm, i: usize) -> Vec<Vec<(usize, i64)>> {
    let others: Vec<usize> = scm.features().filter(|&k| k != i).collect();
    (0..1usize << others.len())
        .map(|bits| {
            others
                .iter()
                .enumerate()
                .map(|(a, &k)| (k, ((bits >> a) & 1) as i64))
                .collect()
        })
        .collect()
}

fn is_root(scm: &DiscreteScm, i: usize) -> bool {
    scm.node(i).parents.is_empty()
}

#[test]
fn lower_bounds_never_exceed_exact_values() {
    let mut checked_m = 0;
    let mut checked_c = 0;
    for seed in 0..250u64 {
        let features = 1 + (seed % 3) as usize;
        let scm = random_binary_scm(features, OutcomeForm::Arbitrary, seed);
        let joint = scm.distribution().unwrap();
        for i in scm.features() {
            for z in [0, 1] {
                for y in [0, 1] {
                    if is_root(&scm, i) {
                        let exact = exact_poc(&scm, i, z, y, PocKind::Marginal, None).unwrap();
                        assert!((0.0..=1.0).contains(&exact));
                        match poc_lower_bound(&joint, i, z, y, PocKind::Marginal, None) {
                            Ok(b) => {
                                assert!(b.lower_bound <= exact + 1e-12, "seed {seed} node {i}: {b:?} vs {exact}");
                                checked_m += 1;
                            }
                            Err(PocError::ZeroMass { .. }) => {}
                            Err(e) => panic!("{e}"),
                        }
                    }
                    for ctx in contexts(&scm, i) {
                        let exact = exact_poc(&scm, i, z, y, PocKind::Conditional, Some(&ctx)).unwrap();
                        assert!((0.0..=1.0).contains(&exact));
                        match poc_lower_bound(&joint, i, z, y, PocKind::Conditional, Some(&ctx)) {
                            Ok(b) => {
                                assert!(b.lower_bound <= exact + 1e-12, "seed {seed} node {i}: {b:?} vs {exact}");
                                checked_c += 1;
                            }
                            Err(PocError::ZeroMass { .. }) => {}
                            Err(e) => panic!("{e}"),
                        }
                    }
                }
            }
        }
    }
    assert!(
        checked_m >= 500 && checked_c >= 1000,
        "{checked_m} marginal, {checked_c} conditional checks"
    );
}

#[test]
fn monotone_outcome_attains_the_marginal_bound() {
    let mut checked = 0;
    for seed in 0..200u64 {
        let scm = random_binary_scm(1 + (seed % 3) as usize, OutcomeForm::Monotone, seed);
        let joint = scm.distribution().unwrap();
        for (z, y) in [(1, 1), (0, 0)] {
            let exact = exact_poc(&scm, 0, z, y, PocKind::Marginal, None).unwrap();
            let bound = match poc_lower_bound(&joint, 0, z, y, PocKind::Marginal, None) {
                Ok(b) => b,
                // Z0 is constant when its table ignores the noise.
                Err(PocError::ZeroMass { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            assert!(
                (exact - bound.lower_bound).abs() < 1e-12,
                "seed {seed}: {exact} vs {}",
                bound.lower_bound
            );
            checked += 1;
        }
    }
    assert!(checked >= 200, "{checked} checks");
}

#[test]
fn poc_effect_inequalities() {
    for (form, seeds) in [
        (OutcomeForm::Arbitrary, 0..200u64),
        (OutcomeForm::Additive, 1000..1200u64),
    ] {
        for seed in seeds {
            let scm = random_binary_scm(1 + (seed % 3) as usize, form, seed);
            for i in scm.features() {
                for z in [0, 1] {
                    for ctx in contexts(&scm, i) {
                        let rec = match theorem2_check(&scm, i, z, &ctx) {
                            Ok(r) => r,
                            Err(PocError::ZeroMass { .. }) => continue,
                            Err(e) => panic!("{e}"),
                        };
                        assert!(rec.conditional_slack() >= -1e-12, "seed {seed}: {rec:?}");
                        if is_root(&scm, i) {
                            assert!(rec.marginal_slack() >= -1e-12, "seed {seed}: {rec:?}");
                            assert!(rec.marginal_min_slack() >= -1e-12, "seed {seed}: {rec:?}");
                        }
                        if form == OutcomeForm::Additive {
                            assert!(rec.conditional_min_slack() >= -1e-12, "seed {seed}: {rec:?}");
                        }
                    }
                }
            }
        }
    }
}

/// Reorders the noise levels of `node` by `perm` without changing the law.
fn relabel_noise(scm: &DiscreteScm, node: usize, perm: &[usize]) -> DiscreteScm {
    let mut nodes: Vec<DiscreteNode> = scm.nodes().to_vec();
    let old = nodes[node].clone();
    let m = old.noise.len();
    let mut noise = vec![0.0; m];
    let mut table = old.table.clone();
    for (e, &to) in perm.iter().enumerate() {
        noise[to] = old.noise[e];
        for block in 0..old.table.len() / m {
            table[block * m + to] = old.table[block * m + e];
        }
    }
    nodes[node].noise = noise;
    nodes[node].table = table;
    DiscreteScm::new(nodes, scm.outcome()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_poc_ignores_noise_labels(seed in 0u64..10_000, node_pick in 0usize..4, rot in 1usize..3) {
        let scm = random_binary_scm(3, OutcomeForm::Arbitrary, seed);
        let node = node_pick % scm.dim();
        let m = scm.node(node).noise.len();
        let perm: Vec<usize> = (0..m).map(|e| (e + rot) % m).collect();
        let relabeled = relabel_noise(&scm, node, &perm);
        for i in scm.features() {
            for z in [0, 1] {
                let a = exact_poc(&scm, i, z, 1, PocKind::Marginal, None).unwrap();
                let b = exact_poc(&relabeled, i, z, 1, PocKind::Marginal, None).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
                let ctx = contexts(&scm, i).remove(0);
                let a = exact_poc(&scm, i, z, 1, PocKind::Conditional, Some(&ctx)).unwrap();
                let b = exact_poc(&relabeled, i, z, 1, PocKind::Conditional, Some(&ctx)).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empirical_estimators_are_order_invariant(
        rows in prop::collection::vec((0i64..2, 0i64..3, 0i64..2), 1..60),
        shuffle_seed in any::<u64>(),
    ) {
        let build = |rows: &[(i64, i64, i64)]| {
            let values = DMatrix::from_fn(rows.len(), 3, |r, c| {
                let (a, b, y) = rows[r];
                [a, b, y][c] as f64
            });
            Dataset::new(values, vec!["A".into(), "B".into(), "Y".into()], 2).unwrap()
        };
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let (d1, d2) = (build(&rows), build(&shuffled));
        let (m1, m2) = (FrequencyModel::laplace(&d1).unwrap(), FrequencyModel::laplace(&d2).unwrap());
        let a = empirical_mpoc(&d1, 0, &m1).unwrap();
        let b = empirical_mpoc(&d2, 0, &m2).unwrap();
        prop_assert_eq!(a.log_value.to_bits(), b.log_value.to_bits());
        let a = empirical_cpoc(&d1, 1, &[0, 1], &m1).unwrap();
        let b = empirical_cpoc(&d2, 1, &[0, 1], &m2).unwrap();
        prop_assert_eq!(a.log_value.to_bits(), b.log_value.to_bits());
        prop_assert!(a.value >= 0.0 && a.geometric_mean <= 1.0);
    }
}

#[test]
fn conditional_estimator_on_exact_frequencies() {
    // Y = A and B on the four equally frequent cells, repeated.
    let cells = [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 1)];
    let rows: Vec<(i64, i64, i64)> = (0..40).map(|j| cells[j % 4]).collect();
    let values = DMatrix::from_fn(rows.len(), 3, |r, c| {
        let (a, b, y) = rows[r];
        [a, b, y][c] as f64
    });
    let data = Dataset::new(values, vec!["A".into(), "B".into(), "Y".into()], 2).unwrap();
    let model = FrequencyModel::fit(&data, 0.0).unwrap();
    // With B held at its observed value, P(Y=y | A, B) is 0 or 1. The factor
    // is 1 when B = 1 and 0 when B = 0 (A has no influence there).
    let c = empirical_cpoc(&data, 0, &[0, 1], &model).unwrap();
    assert_eq!(c.log_value, f64::NEG_INFINITY);
    // Marginally: P(Y=1|A=1) = 1/2, P(Y=1|A=0) = 0, so factors are 1/2 for
    // every row.
    let m = empirical_mpoc(&data, 0, &model).unwrap();
    assert!((m.geometric_mean - 0.5).abs() < 1e-12);
    let only_b1: Vec<(i64, i64, i64)> = rows.into_iter().filter(|r| r.1 == 1).collect();
    let values = DMatrix::from_fn(only_b1.len(), 3, |r, c| {
        let (a, b, y) = only_b1[r];
        [a, b, y][c] as f64
    });
    let data = Dataset::new(values, vec!["A".into(), "B".into(), "Y".into()], 2).unwrap();
    let model = FrequencyModel::fit(&data, 0.0).unwrap();
    assert_eq!(empirical_cpoc(&data, 0, &[0, 1], &model).unwrap().value, 1.0);
}
