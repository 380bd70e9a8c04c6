use proptest::prelude::*;

use super::*;
use crate::numcore::{Matrix, RngStream};

fn one_hot_block(labels: &[usize], classes: usize, noise: usize, seed: u64) -> Matrix {
    let mut rng = RngStream::new(seed, 0);
    Matrix::from_fn(labels.len(), classes + noise, |r, c| {
        if c < classes {
            f64::from(u8::from(labels[r] == c))
        } else {
            rng.normal()
        }
    })
}

fn random_labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = RngStream::new(seed, 1);
    (0..n).map(|_| rng.below(classes)).collect()
}

#[test]
fn split_is_eighty_twenty_and_deterministic() {
    let (a, b) = split_indices(100, 3);
    assert_eq!((a.len(), b.len()), (80, 20));
    assert_eq!(split_indices(100, 3), (a.clone(), b.clone()));
    let mut all: Vec<usize> = a.into_iter().chain(b).collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
}

#[test]
fn separable_one_hot_is_read_exactly() {
    let labels = random_labels(200, 7, 0);
    let z = one_hot_block(&labels, 7, 5, 1);
    let t = ProbeTargets::labels(labels, 7);
    for class in [
        FunctionClass::linear(TaskMode::Classification),
        FunctionClass::linear(TaskMode::Regression),
        FunctionClass::coordinate(TaskMode::Regression),
    ] {
        let p = fit_probe(class, &z, &t, 4).unwrap();
        assert_eq!(p.heldout_score(), 1.0, "{}", class.name());
    }
}

#[test]
fn shuffled_labels_score_near_chance() {
    let labels = random_labels(1000, 7, 2);
    let z = RngStream::new(9, 0).normal_matrix(1000, 12, 1.0);
    let t = ProbeTargets::labels(labels.clone(), 7);
    let p = fit_probe(FunctionClass::linear(TaskMode::Classification), &z, &t, 0).unwrap();
    let chance = chance_accuracy(&labels, 7, 0);
    let sigma = (chance * (1.0 - chance) / p.diagnostics.n_heldout as f64).sqrt();
    assert!((p.heldout_score() - chance).abs() <= 3.0 * sigma);
}

#[test]
fn planted_coordinate_is_found() {
    let labels = random_labels(300, 2, 3);
    let mut z = RngStream::new(4, 0).normal_matrix(300, 16, 1.0);
    for (r, &l) in labels.iter().enumerate() {
        z[(r, 7)] = l as f64 * 2.0 - 1.0 + 0.01 * z[(r, 7)];
    }
    let t = ProbeTargets::labels(labels, 2);
    let oracle = fit_coordinate_probe_exhaustive(&z, &t);
    let fitted = fit_probe(FunctionClass::coordinate(TaskMode::Classification), &z, &t, 0).unwrap();
    let ProbeParams::Coordinate(m) = &oracle.params else { panic!() };
    assert_eq!(m.indices(), vec![7]);
    let ProbeParams::Coordinate(m2) = &fitted.params else { panic!() };
    assert_eq!(m2.indices(), vec![7]);
    assert_eq!(oracle.diagnostics.train_score, 1.0);
}

#[test]
fn linear_regression_hits_least_squares_optimum() {
    let mut rng = RngStream::new(5, 0);
    let z = rng.normal_matrix(100, 4, 1.0);
    let y = Matrix::from_fn(100, 1, |r, _| {
        2.0 * z[(r, 0)] - z[(r, 3)] + 0.5 + 0.1 * rng.normal()
    });
    let t = ProbeTargets::Values(y.clone());
    let p = fit_probe(FunctionClass::linear(TaskMode::Regression), &z, &t, 0).unwrap();
    let ProbeParams::Linear { w, b } = &p.params else { panic!() };
    let (train, _) = split_indices(100, 0);
    let (zt, yt) = (z.select_rows(&train), y.select_rows(&train));
    let err = |w: &Matrix, b: &Matrix| zt.matmul(w).unwrap().add_row_broadcast(b).unwrap().sub(&yt).unwrap().frobenius_sq();
    let best = err(w, b);
    let mut prng = RngStream::new(6, 0);
    for _ in 0..1000 {
        let w2 = w.add(&prng.normal_matrix(4, 1, 1e-3)).unwrap();
        let b2 = b.add(&prng.normal_matrix(1, 1, 1e-3)).unwrap();
        assert!(err(&w2, &b2) >= best - 1e-12);
    }
}

#[test]
fn class_mismatch_is_rejected() {
    let z = Matrix::zeros(30, 2);
    let t = ProbeTargets::Values(Matrix::zeros(30, 1));
    assert!(matches!(
        fit_probe(FunctionClass::linear(TaskMode::Classification), &z, &t, 0),
        Err(Error::InvalidProbeSpec(_))
    ));
    let few = ProbeTargets::Values(Matrix::zeros(10, 1));
    assert!(fit_probe(FunctionClass::linear(TaskMode::Regression), &Matrix::zeros(10, 2), &few, 0).is_err());
}

#[test]
fn mlp_probe_learns_xor() {
    let mut rng = RngStream::new(7, 0);
    let z = rng.normal_matrix(400, 2, 1.0);
    let labels: Vec<usize> = (0..400).map(|r| usize::from((z[(r, 0)] > 0.0) != (z[(r, 1)] > 0.0))).collect();
    let t = ProbeTargets::labels(labels, 2);
    let lin = fit_probe(FunctionClass::linear(TaskMode::Classification), &z, &t, 0).unwrap();
    let mlp = fit_probe(FunctionClass::mlp(8, TaskMode::Classification), &z, &t, 0).unwrap();
    assert!(mlp.heldout_score() > 0.9);
    assert!(lin.heldout_score() < 0.75);
}

#[test]
fn edits_reach_targets() {
    let labels = random_labels(200, 5, 8);
    let z = one_hot_block(&labels, 5, 3, 9);
    let t = ProbeTargets::labels(labels, 5);
    for class in [
        FunctionClass::linear(TaskMode::Classification),
        FunctionClass::linear(TaskMode::Regression),
        FunctionClass::coordinate(TaskMode::Regression),
        FunctionClass::coordinate(TaskMode::Classification),
    ] {
        let p = fit_probe(class, &z, &t, 0).unwrap();
        for m in 0..5 {
            match p.edit(&z, &EditTarget::Label(m)) {
                Ok(e) => assert!(p.labels(&e).unwrap().iter().all(|&l| l == m)),
                Err(Error::UnreachableTarget { .. }) => {
                    assert_eq!(class, FunctionClass::coordinate(TaskMode::Classification))
                }
                Err(e) => panic!("{e}"),
            }
        }
    }
    let p = fit_probe(FunctionClass::linear(TaskMode::Classification), &z, &t, 0).unwrap();
    assert!(matches!(p.edit(&z, &EditTarget::Label(9)), Err(Error::UnreachableTarget { .. })));
}

#[test]
fn linear_value_edit_is_minimum_norm() {
    let mut rng = RngStream::new(10, 0);
    let z = rng.normal_matrix(50, 6, 1.0);
    let y = Matrix::from_fn(50, 1, |r, _| z[(r, 0)] + 2.0 * z[(r, 1)]);
    let p = fit_probe(FunctionClass::linear(TaskMode::Regression), &z, &ProbeTargets::Values(y), 0).unwrap();
    let e = p.edit(&z, &EditTarget::Value(vec![3.0])).unwrap();
    let ProbeParams::Linear { w, .. } = &p.params else { panic!() };
    // The shift must be parallel to the read-out direction.
    for r in 0..z.rows() {
        let d: Vec<f64> = e.row(r).iter().zip(z.row(r)).map(|(a, b)| a - b).collect();
        let ratio = d[0] / w[(0, 0)];
        for j in 0..6 {
            assert!((d[j] - ratio * w[(j, 0)]).abs() < 1e-9);
        }
    }
}

#[test]
fn windowed_probe_edits_only_its_window() {
    let labels = random_labels(100, 3, 11);
    let block = one_hot_block(&labels, 3, 0, 0);
    let noise = RngStream::new(12, 0).normal_matrix(100, 4, 1.0);
    let z = Matrix::hcat(&[&noise, &block]).unwrap();
    let t = ProbeTargets::labels(labels, 3);
    let p = fit_probe_windowed(FunctionClass::linear(TaskMode::Classification), &z, Some((4, 3)), &t, 0).unwrap();
    assert_eq!(p.heldout_score(), 1.0);
    let e = p.edit(&z, &EditTarget::Label(2)).unwrap();
    assert_eq!(e.select_cols(0, 4), noise);
}

#[test]
fn control_function_flags_nontrivial_f1() {
    // Inputs one-hot(a) ⊕ one-hot(b); z carries one-hot((a + b) mod 7).
    let n = 7;
    let mut rng = RngStream::new(13, 0);
    let mut x = Matrix::zeros(500, 2 * n);
    let mut labels = vec![];
    for r in 0..500 {
        let (a, b) = (rng.below(n), rng.below(n));
        x[(r, a)] = 1.0;
        x[(r, n + b)] = 1.0;
        labels.push((a + b) % n);
    }
    let z = one_hot_block(&labels, n, 9, 14);
    let class = FunctionClass::linear(TaskMode::Classification);
    let g = fit_probe(class, &z, &ProbeTargets::labels(labels, n), 0).unwrap();
    let rec = control_function_test(&x, &z, class, &g, 0, 0.1).unwrap();
    assert!(rec.f1_nontrivial, "{rec:?}");

    // With f₁ = identity the control map is as good as f₁.
    let ident = fit_probe(class, &x, &g.predict(&z).unwrap(), 0).unwrap();
    let rec = control_function_test(&x, &x, class, &ident, 0, 0.1).unwrap();
    assert!(!rec.f1_nontrivial, "{rec:?}");
}

#[test]
fn probe_file_round_trip() {
    let labels = random_labels(60, 3, 15);
    let z = one_hot_block(&labels, 3, 2, 16);
    let t = ProbeTargets::labels(labels, 3);
    let dir = tempfile::tempdir().unwrap();
    for class in [
        FunctionClass::linear(TaskMode::Classification),
        FunctionClass::coordinate(TaskMode::Classification),
        FunctionClass::mlp(4, TaskMode::Regression),
    ] {
        let p = fit_probe(class, &z, &t, 1).unwrap();
        let path = dir.path().join("p.bin");
        p.save(&path, Some("h")).unwrap();
        let back = Probe::load(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.fingerprint(), p.fingerprint());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coordinate_never_beats_linear(seed in any::<u64>(), dim in 1usize..8) {
        let mut rng = RngStream::new(seed, 0);
        let z = rng.normal_matrix(60, dim, 1.0);
        let y = Matrix::from_fn(60, 1, |r, _| z[(r, 0)] * 0.7 + rng.normal());
        let t = ProbeTargets::Values(y);
        let c = fit_probe(FunctionClass::coordinate(TaskMode::Regression), &z, &t, seed).unwrap();
        let l = fit_probe(FunctionClass::linear(TaskMode::Regression), &z, &t, seed).unwrap();
        prop_assert!(l.diagnostics.objective <= c.diagnostics.objective + 1e-9);
    }

    #[test]
    fn exhaustive_coordinate_is_optimal(seed in any::<u64>(), dim in 1usize..10) {
        let mut rng = RngStream::new(seed, 0);
        let z = rng.normal_matrix(40, dim, 1.0);
        let labels: Vec<usize> = (0..40).map(|_| rng.below(2)).collect();
        let t = ProbeTargets::labels(labels, 2);
        let p = fit_coordinate_probe_exhaustive(&z, &t);
        let objs = coordinate_objectives(&z, &t, TaskMode::Classification);
        let ProbeParams::Coordinate(m) = &p.params else { unreachable!() };
        let chosen = m.indices()[0];
        for (i, o) in objs.iter().enumerate() {
            prop_assert!(o[0] >= objs[chosen][0]);
            if i < chosen { prop_assert!(o[0] > objs[chosen][0]); }
        }
        prop_assert!((p.diagnostics.train_error - objs[chosen][0]).abs() < 1e-12);
    }

    #[test]
    fn fitting_is_deterministic(seed in any::<u64>()) {
        let labels = random_labels(50, 3, seed);
        let z = one_hot_block(&labels, 3, 3, seed);
        let t = ProbeTargets::labels(labels, 3);
        let class = FunctionClass::linear(TaskMode::Classification);
        prop_assert_eq!(fit_probe(class, &z, &t, seed).unwrap(), fit_probe(class, &z, &t, seed).unwrap());
    }
}
