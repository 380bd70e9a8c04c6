use super::*;
use crate::nets::{build_mlp, plant_network, FactoredNetwork, PlantEncoding, PlantPlan};
use crate::numcore::RngStream;
use crate::probes::{FunctionClass, TaskMode};
use crate::worlds::{materialize, WorldParams};

fn modadd_data(n: usize, rows: usize, seed: u64) -> LabeledDataset {
    let w = WorldParams::Modadd { n }.build().unwrap();
    materialize(&w, &mut RngStream::new(seed, 1), rows).unwrap()
}

fn planted(spurious: bool) -> FactoredNetwork {
    PlantPlan::new(WorldParams::Modadd { n: 7 }, "sum")
        .unwrap()
        .with_noise_dims(9)
        .spurious(spurious)
        .build(0)
        .unwrap()
}

fn verdict<'a>(run: &'a CheckRun, c: &str) -> &'a CriterionResult {
    run.result(c).unwrap_or_else(|| panic!("no `{c}` result"))
}

#[test]
fn planted_positive_passes_with_zero_error() {
    let net = plant_network(&WorldParams::Modadd { n: 7 }, 9, 0).unwrap();
    let data = modadd_data(7, 400, 2);
    let mut plan = CheckPlan::new("sum", FunctionClass::coordinate(TaskMode::Regression));
    plan.fx = Some(FunctionClass::coordinate(TaskMode::Classification));
    let run = run_checks(&net, 1, &data, &plan, 0, "global").unwrap();
    let contain = verdict(&run, "containment");
    assert_eq!(contain.verdict, Verdict::Pass);
    assert_eq!(contain.score, 1.0);
    let complete = verdict(&run, "causal_complete");
    assert_eq!(complete.verdict, Verdict::Pass);
    assert_eq!(complete.error, 0.0);
    let partial = verdict(&run, "causal_partial");
    assert_eq!(partial.verdict, Verdict::Pass);
    assert_eq!(partial.error, 0.0);
    assert_eq!(partial.metrics["intervention_success"], 1.0);
    assert_eq!(verdict(&run, "learned").label, "LEARNED");
    assert_eq!(verdict(&run, "off_manifold").score, 1.0);
    for r in &run.results {
        assert_eq!(r.rederive(), r.verdict, "{}", r.criterion);
    }
}

#[test]
fn spurious_plant_fails_causal_checks() {
    let net = planted(true);
    let data = modadd_data(7, 400, 2);
    let plan = CheckPlan::new("sum", FunctionClass::linear(TaskMode::Classification));
    let run = run_checks(&net, 1, &data, &plan, 0, "global").unwrap();
    assert_eq!(verdict(&run, "containment").verdict, Verdict::Pass);
    let complete = verdict(&run, "causal_complete");
    assert_eq!(complete.verdict, Verdict::Fail);
    assert!(complete.error > plan.thresholds.causal);
    let partial = verdict(&run, "causal_partial");
    assert_eq!(partial.verdict, Verdict::Fail);
    assert!(partial.error > plan.thresholds.causal);
    assert_eq!(verdict(&run, "emergent").label, "EMERGENT");
}

#[test]
fn single_neuron_analog_flips_aspect() {
    let net = PlantPlan::new(WorldParams::Modadd { n: 7 }, "sum_high")
        .unwrap()
        .with_encoding(PlantEncoding::Scalar)
        .with_offset(4)
        .with_noise_dims(9)
        .build(1)
        .unwrap();
    let data = modadd_data(7, 300, 4);
    let plan = CheckPlan::new("sum_high", FunctionClass::coordinate(TaskMode::Classification));
    let run = run_checks(&net, 1, &data, &plan, 0, "global").unwrap();
    let g = run.g.as_ref().unwrap();
    let crate::probes::ProbeParams::Coordinate(map) = &g.params else {
        panic!("coordinate probe expected")
    };
    assert_eq!(map.indices(), vec![4]);
    let partial = verdict(&run, "causal_partial");
    assert_eq!(partial.verdict, Verdict::Pass);
    assert_eq!(partial.metrics["intervention_success"], 1.0);
    assert!(run.interventions.iter().any(|o| !o.noop && o.pre_aspect != o.post_aspect));
}

#[test]
fn constant_output_violates_nonconstancy() {
    let net = planted(false);
    let data = modadd_data(7, 600, 5);
    let labels = data.model("sum").unwrap().labels.clone().unwrap();
    let rows: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == 3).collect();
    let data = data.select(&rows);
    let subject = Subject::new(net.split(1).unwrap(), &data, "sum").unwrap();
    let g = crate::probes::fit_probe(FunctionClass::linear(TaskMode::Classification), &subject.z, &subject.targets, 0).unwrap();
    let err = check_causal_partial(
        &subject,
        &g,
        &AspectSpec::argmax(),
        Phi2Kind::Auto,
        &[],
        10,
        &Thresholds::default(),
        0,
    )
    .unwrap_err();
    assert!(matches!(err, Error::NonconstancyViolated { entropy, .. } if entropy == 0.0));
}

#[test]
fn untrained_net_fails_containment_and_skips_rest() {
    let net = build_mlp(&[14, 32, 32, 7], false, 0).unwrap();
    let data = modadd_data(7, 400, 6);
    let plan = CheckPlan::new("sum", FunctionClass::linear(TaskMode::Classification));
    let run = run_checks(&net, 1, &data, &plan, 0, "global").unwrap();
    assert_eq!(verdict(&run, "containment").verdict, Verdict::Fail);
    for c in ["learned", "emergent", "causal_complete", "causal_partial", "off_manifold"] {
        assert_eq!(verdict(&run, c).verdict, Verdict::Skipped);
    }
}

#[test]
fn table_phi2_rejects_continuous_models() {
    let m = crate::probes::ProbeTargets::Values(Matrix::zeros(3, 1));
    let err = Phi2::fit(Phi2Kind::Table, &m, &Matrix::zeros(3, 2)).unwrap_err();
    assert!(matches!(err, Error::InvalidSpec(_)));
}

#[test]
fn local_always_matches_global_and_skips_empty_complement() {
    let net = planted(false);
    let data = modadd_data(7, 300, 7);
    let world = WorldParams::Modadd { n: 7 }.build().unwrap();
    let plan = CheckPlan::new("sum", FunctionClass::linear(TaskMode::Classification));
    let global = run_checks(&net, 1, &data, &plan, 0, "global").unwrap();
    let local = check_local(&world, "always", &net, 1, &data, &plan, 0).unwrap();
    let inside: Vec<_> = local.iter().filter(|r| r.scope == "local:always").collect();
    assert_eq!(inside.len(), global.results.len());
    for (l, g) in inside.iter().zip(&global.results) {
        assert_eq!((l.verdict, l.score, l.error), (g.verdict, g.score, g.error));
    }
    let outside: Vec<_> = local.iter().filter(|r| r.scope == "complement:always").collect();
    assert_eq!(outside.len(), 1);
    assert_eq!(outside[0].verdict, Verdict::Skipped);
    assert!(outside[0].notice.is_some());
    assert!(matches!(
        check_local(&world, "!always", &net, 1, &data, &plan, 0),
        Err(Error::RestrictionTooTight { .. })
    ));
}

#[test]
fn rederive_tracks_tampering() {
    let net = planted(false);
    let data = modadd_data(7, 300, 8);
    let plan = CheckPlan::new("sum", FunctionClass::linear(TaskMode::Classification));
    let run = run_checks(&net, 1, &data, &plan, 0, "global").unwrap();
    let mut r = verdict(&run, "containment").clone();
    assert_eq!(r.rederive(), Verdict::Pass);
    r.score = 0.5;
    assert_eq!(r.rederive(), Verdict::Fail);
}

#[test]
fn competitor_band_and_labels() {
    let th = Thresholds::default();
    let at = |d: f64, exact: bool| {
        CriterionResult::new("learned", Rule::Competitor { exact }, 0.9 - d, 0.0, th).with_reference(0.9)
    };
    assert_eq!(at(0.2, false).label, "LEARNED");
    assert_eq!(at(0.07, false).verdict, Verdict::Inconclusive);
    assert_eq!(at(0.07, true).label, "NOT-LEARNED");
    assert_eq!(at(0.0, false).label, "NOT-LEARNED");
    let e = CriterionResult::new("emergent", Rule::Competitor { exact: false }, 1.0, 0.0, th).with_reference(1.0);
    assert_eq!(e.label, "NOT-EMERGENT");
}

#[test]
fn thresholds_validate_and_parse() {
    let t: Thresholds = serde_json::from_str(r#"{"margin": 0.2}"#).unwrap();
    assert_eq!(t.margin, 0.2);
    assert_eq!(t.contain, 0.9);
    assert!(serde_json::from_str::<Thresholds>(r#"{"bogus": 1}"#).is_err());
    assert!(Thresholds { causal: 1.5, ..t }.validate().is_err());
}

#[test]
fn results_json_round_trip() {
    let net = planted(false);
    let data = modadd_data(7, 200, 9);
    let plan = CheckPlan::new("sum", FunctionClass::linear(TaskMode::Classification));
    let run = run_checks(&net, 1, &data, &plan, 0, "global").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    write_results_json(&path, &run.results).unwrap();
    assert_eq!(read_results_json(&path).unwrap(), run.results);
    let csv_path = dir.path().join("i.csv");
    write_interventions_csv(&csv_path, "h", &run.interventions).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), run.interventions.len() + 1);
}

#[test]
fn reruns_are_bit_identical() {
    let net = planted(true);
    let data = modadd_data(7, 200, 10);
    let mut plan = CheckPlan::new("sum", FunctionClass::linear(TaskMode::Classification));
    plan.fx = Some(FunctionClass::mlp(8, TaskMode::Classification));
    let a = run_checks(&net, 1, &data, &plan, 3, "global").unwrap();
    let b = run_checks(&net, 1, &data, &plan, 3, "global").unwrap();
    assert_eq!(
        serde_json::to_string(&a.results).unwrap(),
        serde_json::to_string(&b.results).unwrap()
    );
}
