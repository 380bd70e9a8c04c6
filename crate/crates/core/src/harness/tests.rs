use super::*;

const PLANTED: &str = r#"{
    "name": "planted",
    "world": {"kind": "modadd", "n": 7},
    "data": {"eval_rows": 200},
    "net": {"kind": "planted", "model": "sum", "noise_dims": 9},
    "checks": {
        "model": "sum",
        "fz": {"kind": "coordinate", "mode": "regression"},
        "fx": {"kind": "coordinate", "mode": "classification"},
        "interventions": {"count": 20}
    },
    "local": ["a_zero"]
}"#;

fn planted() -> ExperimentConfig {
    ExperimentConfig::from_json(PLANTED).unwrap()
}

#[test]
fn unknown_fields_are_config_errors() {
    let bad = PLANTED.replacen("\"name\"", "\"nmae\": 1, \"name\"", 1);
    let e = ExperimentConfig::from_json(&bad).unwrap_err();
    assert!(matches!(e, Error::Config { .. }), "{e}");
    assert_eq!(exit_code(&e), exit::CONFIG);
    let e = ExperimentConfig::from_json(&PLANTED.replace("\"sum\"", "\"nope\"")).unwrap_err();
    assert!(matches!(e, Error::Config { ref location, .. } if location.starts_with("checks") || location == "net"));
}

#[test]
fn hash_ignores_output_dir_only() {
    let a = planted();
    let mut b = a.clone();
    b.output_dir = Some("elsewhere".into());
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), a.clone().with_seed(5).hash());
}

#[test]
fn run_writes_report_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&planted(), dir.path()).unwrap();
    assert!(report.error.is_none());
    let layer = &report.layers[0];
    let names: Vec<(&str, &str)> = layer
        .results
        .iter()
        .map(|r| (r.criterion.as_str(), r.scope.as_str()))
        .collect();
    assert_eq!(names[0], ("containment", "global"));
    assert_eq!(names.last().unwrap(), &("off_manifold", "global"));
    assert!(names.iter().any(|(_, s)| *s == "local:a_zero"));
    assert!(names.iter().any(|(_, s)| *s == "complement:a_zero"));
    for c in ["containment", "causal_complete", "causal_partial"] {
        assert_eq!(report.result(1, c, "global").unwrap().verdict, crate::criteria::Verdict::Pass);
    }
    let outcome = verify(dir.path()).unwrap();
    assert!(outcome.passed(), "{:?}", outcome.mismatches);
}

#[test]
fn verify_lists_tampered_score() {
    let dir = tempfile::tempdir().unwrap();
    run(&planted(), dir.path()).unwrap();
    let path = dir.path().join(REPORT_FILE);
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    v["layers"][0]["results"][1]["score"] = serde_json::json!(0.123);
    std::fs::write(&path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    let outcome = verify(dir.path()).unwrap();
    assert!(outcome
        .mismatches
        .iter()
        .any(|m| m.starts_with("layers[0].results[1].score")));
}

#[test]
fn verify_detects_swapped_checkpoint_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted();
    run(&cfg, dir.path()).unwrap();
    let other = cfg.clone().with_seed(9).build_net().unwrap();
    other.save(&dir.path().join(CHECKPOINT_FILE), Some(&cfg.hash())).unwrap();
    let e = verify(dir.path()).unwrap_err();
    assert!(matches!(e, Error::HashMismatch { .. }));
    std::fs::remove_file(dir.path().join(CHECKPOINT_FILE)).unwrap();
    let e = verify(dir.path()).unwrap_err();
    assert_eq!(exit_code(&e), exit::MISSING_ARTIFACT);
}

#[test]
fn runtime_errors_are_mirrored_into_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = planted();
    cfg.checks.fz = crate::probes::FunctionClass::mlp(4, crate::probes::TaskMode::Classification);
    let e = run(&cfg, dir.path()).unwrap_err();
    assert_eq!(exit_code(&e), exit::RUNTIME);
    let report = Report::read(dir.path()).unwrap();
    assert_eq!(report.error.unwrap().stage, "causal_partial");
}

#[test]
fn sweep_rows_per_grid_point() {
    let cfg = planted();
    let grid = SweepGrid {
        layers: vec![1],
        seeds: vec![0, 1, 2],
    };
    let rows = sweep(&cfg, &grid, 2).unwrap();
    let contain: Vec<_> = rows
        .iter()
        .filter(|r| r.criterion == "containment" && r.scope == "global")
        .collect();
    assert_eq!(contain.len(), 3);
    assert_eq!(rows, sweep(&cfg, &grid, 1).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_sweep_csv(&path, &rows).unwrap();
    assert_eq!(read_sweep_csv(&path).unwrap(), rows);
    let empty = SweepGrid { layers: vec![], seeds: vec![0] };
    assert_eq!(exit_code(&sweep(&cfg, &empty, 1).unwrap_err()), exit::CONFIG);
}

#[test]
fn export_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    let cfg = planted();
    export_dataset(&cfg, DatasetSplit::Eval, Some(30), &path).unwrap();
    let ds = crate::worlds::LabeledDataset::load(&path).unwrap();
    assert_eq!(ds.len(), 30);
}
