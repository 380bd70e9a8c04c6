use serde::{Deserialize, Serialize};
use serde_json::json;

use super::intervene::{edit_targets, run_interventions, success_rate, InterventionOutcome, LayerEditor};
use super::{AspectSpec, Baselines, CriterionResult, Phi2, Phi2Kind, Rule, Subject, Thresholds};
use crate::error::{Error, Result};
use crate::nets::ZMode;
use crate::numcore::rng::streams;
use crate::numcore::{Matrix, RngStream};
use crate::probes::{
    chance_accuracy, control_function_test, fit_probe, fit_probe_windowed, ClassKind, ControlRecord,
    FunctionClass, Probe, ProbeTargets,
};

/// Counterfactual targets tried for real-valued models.
const VALUE_TARGETS: usize = 10;
/// Perturbation scale, relative to RMS(Z), used by causal-complete.
const COMPLETE_SIGMA: f64 = 0.1;

fn probe_evidence(p: &Probe) -> serde_json::Value {
    json!({
        "probe": p.fingerprint(),
        "class": p.class.name(),
        "window": p.window,
        "diagnostics": p.diagnostics,
    })
}

/// Fits `g ∈ class` on `(f₁(α(w)), φ₁(w))`.
///
/// PASS iff the heldout score reaches `contain` and beats the same class
/// fitted to shuffled targets by `margin`.
pub fn check_containment(
    s: &Subject<'_>,
    class: FunctionClass,
    window: Option<(usize, usize)>,
    th: &Thresholds,
    seed: u64,
) -> Result<(CriterionResult, Probe)> {
    let g = fit_probe_windowed(class, &s.z, window, &s.targets, seed)?;
    let perm = RngStream::new(seed, streams::SHUFFLE_BASELINE).permutation(s.rows());
    let shuffled = fit_probe_windowed(class, &s.z, window, &s.targets.select(&perm), seed)?;
    let chance = match &s.targets {
        ProbeTargets::Labels { labels, classes } => chance_accuracy(labels, *classes, seed),
        ProbeTargets::Values(_) => 0.0,
    };
    let d = &g.diagnostics;
    let result = CriterionResult::new("containment", Rule::Containment, d.heldout_score, d.heldout_error, *th)
        .with_baselines(Baselines {
            chance: Some(chance),
            shuffle: Some(shuffled.diagnostics.heldout_score),
            control: None,
        })
        .with_metric("train_score", d.train_score)
        .with_evidence(json!({
            "model": s.model,
            "layer": s.cut.layer(),
            "g": probe_evidence(&g),
        }));
    Ok((result, g))
}

/// Probes fitted by the learned check.
#[derive(Clone, Debug, PartialEq)]
pub struct CompetitorFit {
    /// `h ∈ F_X` fitted to `g∘f₁`.
    pub h: Probe,
    /// `h ∈ F_X` fitted directly to `φ₁`.
    pub direct: Probe,
    pub control: Option<ControlRecord>,
}

fn competitor_result(
    criterion: &str,
    g: &Probe,
    h: &Probe,
    class: FunctionClass,
    th: &Thresholds,
) -> CriterionResult {
    let exact = class.kind == ClassKind::Coordinate;
    CriterionResult::new(
        criterion,
        Rule::Competitor { exact },
        h.diagnostics.heldout_score,
        h.diagnostics.heldout_error,
        *th,
    )
    .with_reference(g.diagnostics.heldout_score)
}

/// Is the model already readable from the input?
///
/// Fits `h ∈ F_X` on `α(w) → g(f₁(α(w)))`. LEARNED (PASS) iff `h` falls short
/// of `g` by at least `margin`. Also records a competitor fitted directly
/// to `φ₁` and the control-function comparison.
pub fn check_learned(
    s: &Subject<'_>,
    g: &Probe,
    fx: FunctionClass,
    th: &Thresholds,
    seed: u64,
) -> Result<(CriterionResult, CompetitorFit)> {
    let x = &s.data.inputs;
    let t = g.predict(&s.z)?;
    let h = fit_probe(fx, x, &t, seed)?;
    let direct = fit_probe(fx, x, &s.targets, seed)?;
    let (control, control_note) = match control_function_test(x, &s.z, g.class, g, seed, th.margin) {
        Ok(rec) => (Some(rec), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mut result = competitor_result("learned", g, &h, fx, th)
        .with_metric("direct_score", direct.diagnostics.heldout_score)
        .with_baselines(Baselines {
            chance: None,
            shuffle: None,
            control: control.as_ref().map(|c| c.control_score),
        })
        .with_evidence(json!({
            "h": probe_evidence(&h),
            "direct": probe_evidence(&direct),
            "control": control,
        }));
    result.notice = control_note;
    Ok((
        result,
        CompetitorFit {
            h,
            direct,
            control,
        },
    ))
}

/// Is the model readable from the output?
///
/// Fits `h ∈ F_Y` on `f₂(z) → g(z)`. EMERGENT (PASS) iff `h` falls short of
/// `g` by at least `margin`.
pub fn check_emergent(
    s: &Subject<'_>,
    g: &Probe,
    fy: FunctionClass,
    th: &Thresholds,
    seed: u64,
) -> Result<(CriterionResult, Probe)> {
    let t = g.predict(&s.z)?;
    let h = fit_probe(fy, &s.y, &t, seed)?;
    let result = competitor_result("emergent", g, &h, fy, th)
        .with_evidence(json!({ "h": probe_evidence(&h) }));
    Ok((result, h))
}

/// Mismatches between `aspect(φ₂(g(z)))` and `aspect(f₂(z))`.
fn aspect_mismatches(s: &Subject<'_>, g: &Probe, phi2: &Phi2, aspect: &AspectSpec, z: &Matrix) -> Result<usize> {
    let y = s.cut.forward_f2(z)?;
    let mapped = phi2.apply(&g.predict(z)?)?;
    let actual = aspect.of_outputs(&y);
    Ok(mapped
        .iter()
        .zip(&actual)
        .filter(|(m, a)| match m {
            Some(v) => !aspect.agree(aspect.decode(v), **a),
            None => true,
        })
        .count())
}

fn perturbed(z: &Matrix, sigma: f64, rng: &mut RngStream) -> Matrix {
    if sigma == 0.0 {
        return z.clone();
    }
    let noise = rng.normal_matrix(z.rows(), z.cols(), sigma * z.rms());
    z.add(&noise).expect("same shape")
}

/// Fits `φ₂: M → Y` and checks `φ₂∘g = f₂` at the aspect level, on `f₁(X)`
/// and on `f₁(X)` perturbed by Gaussian noise of 0.1·RMS(Z).
pub fn check_causal_complete(
    s: &Subject<'_>,
    g: &Probe,
    aspect: &AspectSpec,
    kind: Phi2Kind,
    th: &Thresholds,
    seed: u64,
) -> Result<(CriterionResult, Phi2)> {
    aspect.validate(s.y.cols())?;
    let phi2 = Phi2::fit(kind, &g.predict(&s.z)?, &s.y)?;
    let n = s.rows();
    let on = aspect_mismatches(s, g, &phi2, aspect, &s.z)?;
    let mut rng = RngStream::new(seed, streams::PERTURB);
    let zp = perturbed(&s.z, COMPLETE_SIGMA, &mut rng);
    let off = aspect_mismatches(s, g, &phi2, aspect, &zp)?;
    let error = (on + off) as f64 / (2 * n) as f64;
    let result = CriterionResult::new("causal_complete", Rule::MaxMismatch, 1.0 - error, error, *th)
        .with_metric("on_manifold_mismatch", on as f64 / n as f64)
        .with_metric("perturbed_mismatch", off as f64 / n as f64)
        .with_evidence(json!({
            "phi2": phi2_summary(&phi2),
            "aspect": aspect,
            "sigma_rel": COMPLETE_SIGMA,
        }));
    Ok((result, phi2))
}

fn phi2_summary(phi2: &Phi2) -> serde_json::Value {
    match phi2 {
        Phi2::Table { rows } => json!({
            "kind": "table",
            "defined": rows.iter().filter(|r| r.is_some()).count(),
            "size": rows.len(),
        }),
        Phi2::Linear { w, .. } => json!({ "kind": "linear", "inputs": w.rows() }),
    }
}

/// Everything the causal-partial check produced.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialOutcome {
    pub phi2: Phi2,
    pub single: Vec<InterventionOutcome>,
    pub ensemble: Vec<InterventionOutcome>,
}

/// Fits `φ₂: M → A` and checks `h∘f₂ = φ₂∘g`, then edits `z` toward every
/// counterfactual `m′` at the cut-off layer (and, if given, with an
/// ensemble of per-layer editors).
///
/// Requires the aspect to be nonconstant on the data.
#[allow(clippy::too_many_arguments)]
pub fn check_causal_partial(
    s: &Subject<'_>,
    g: &Probe,
    aspect: &AspectSpec,
    kind: Phi2Kind,
    ensemble: &[LayerEditor<'_>],
    n_interventions: usize,
    th: &Thresholds,
    seed: u64,
) -> Result<(CriterionResult, PartialOutcome)> {
    aspect.validate(s.y.cols())?;
    if s.cut.mode() != ZMode::AllTokens {
        return Err(Error::InvalidSpec(
            "interventions edit whole layers; use an all-token cut-off with a windowed probe".into(),
        ));
    }
    let actual = aspect.of_outputs(&s.y);
    let entropy = aspect.entropy(&actual);
    if entropy < th.nonconst {
        return Err(Error::NonconstancyViolated {
            entropy,
            floor: th.nonconst,
        });
    }
    let m = g.predict(&s.z)?;
    let y_dim = s.y.cols();
    let encoded = Matrix::from_rows(&actual.iter().map(|&a| aspect.encode(a, y_dim)).collect::<Vec<_>>());
    let phi2 = Phi2::fit(kind, &m, &encoded)?;
    let agree = phi2
        .apply(&m)?
        .iter()
        .zip(&actual)
        .filter(|(v, a)| v.as_ref().is_some_and(|v| aspect.agree(aspect.decode(v), **a)))
        .count() as f64
        / s.rows() as f64;

    let net = s.cut.net();
    let targets = edit_targets(g.output, &m, VALUE_TARGETS, seed);
    let editor = [LayerEditor {
        layer: s.cut.layer(),
        probe: g,
    }];
    let single = run_interventions(net, &editor, &phi2, aspect, &s.data.inputs, &targets, n_interventions, seed)?;
    let joint = if ensemble.is_empty() {
        Vec::new()
    } else {
        run_interventions(net, ensemble, &phi2, aspect, &s.data.inputs, &targets, n_interventions, seed)?
    };
    let single_rate = success_rate(&single);
    let mut result = CriterionResult::new("causal_partial", Rule::CausalPartial, agree, 1.0 - agree, *th)
        .with_metric("aspect_entropy", entropy)
        .with_metric("intervention_success", single_rate.unwrap_or(0.0))
        .with_evidence(json!({
            "phi2": phi2_summary(&phi2),
            "aspect": aspect,
            "targets": targets.len(),
            "inputs": n_interventions.min(s.rows()),
            "layers": [s.cut.layer()],
            "ensemble_layers": ensemble_layers(ensemble),
        }));
    if let Some(r) = success_rate(&joint) {
        result = result.with_metric("ensemble_success", r);
    }
    if single_rate.is_none() {
        result.notice = Some("every intervention was a no-op".into());
    }
    Ok((
        result,
        PartialOutcome {
            phi2,
            single,
            ensemble: joint,
        },
    ))
}

fn ensemble_layers(e: &[LayerEditor<'_>]) -> Vec<usize> {
    e.iter().map(|x| x.layer).collect()
}

/// Agreement of `φ₂(g(z′))` with `aspect(f₂(z′))` away from `f₁(X)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffManifoldCurve {
    /// Noise scales relative to RMS(Z).
    pub sigmas: Vec<f64>,
    pub agreement: Vec<f64>,
    /// Agreement on probe-directed minimum-norm edits.
    pub edited_agreement: Option<f64>,
    pub rms: f64,
}

/// Tests `φ₂∘g = h∘f₂` on `z′ = f₁(x) + N(0, σ·RMS(Z))` for each `σ`, and on
/// edited `z`. Scored by the worst agreement away from the manifold.
pub fn check_off_manifold(
    s: &Subject<'_>,
    g: &Probe,
    phi2: &Phi2,
    aspect: &AspectSpec,
    sigmas: &[f64],
    th: &Thresholds,
    seed: u64,
) -> Result<(CriterionResult, OffManifoldCurve)> {
    let n = s.rows() as f64;
    let base = RngStream::new(seed, streams::PERTURB);
    let agreement_at = |z: &Matrix| -> Result<f64> {
        Ok(1.0 - aspect_mismatches(s, g, phi2, aspect, z)? as f64 / z.rows().max(1) as f64)
    };
    let mut agreement = Vec::with_capacity(sigmas.len());
    for (i, &sigma) in sigmas.iter().enumerate() {
        let mut rng = base.substream(i as u64 + 1);
        agreement.push(agreement_at(&perturbed(&s.z, sigma, &mut rng))?);
    }
    let targets = edit_targets(g.output, &g.predict(&s.z)?, VALUE_TARGETS, seed);
    let mut edited_hits = 0.0;
    let mut edited_total = 0usize;
    for t in &targets {
        match g.edit(&s.z, t) {
            Ok(ze) => {
                edited_hits += agreement_at(&ze)? * n;
                edited_total += s.rows();
            }
            Err(Error::UnreachableTarget { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let edited_agreement = (edited_total > 0).then(|| edited_hits / edited_total as f64);
    let worst = sigmas
        .iter()
        .zip(&agreement)
        .filter(|(s, _)| **s > 0.0)
        .map(|(_, a)| *a)
        .chain(edited_agreement)
        .fold(1.0, f64::min);
    let curve = OffManifoldCurve {
        sigmas: sigmas.to_vec(),
        agreement,
        edited_agreement,
        rms: s.z.rms(),
    };
    let mut result = CriterionResult::new("off_manifold", Rule::MaxMismatch, worst, 1.0 - worst, *th)
        .with_evidence(serde_json::to_value(&curve)?);
    for (sigma, a) in curve.sigmas.iter().zip(&curve.agreement) {
        result = result.with_metric(&format!("agreement@{sigma}"), *a);
    }
    if let Some(e) = edited_agreement {
        result = result.with_metric("agreement@edited", e);
    }
    Ok((result, curve))
}
