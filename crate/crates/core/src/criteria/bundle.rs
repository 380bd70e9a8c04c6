use serde::{Deserialize, Serialize};

use super::checks::{
    check_causal_complete, check_causal_partial, check_containment, check_emergent, check_learned,
    check_off_manifold, CompetitorFit, OffManifoldCurve,
};
use super::intervene::{InterventionOutcome, LayerEditor};
use super::{AspectSpec, CriterionResult, Phi2, Phi2Kind, Subject, Thresholds, Verdict};
use crate::error::{Error, Result};
use crate::nets::FactoredNetwork;
use crate::probes::{FunctionClass, Probe, MIN_ROWS};
use crate::worlds::{restrict, LabeledDataset, WorldSpec};

/// Which columns of an all-token cut-off the probe `g` reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZWindow {
    #[default]
    All,
    /// Only the final token's embedding (sequence models).
    LastToken,
}

impl ZWindow {
    pub fn resolve(self, net: &FactoredNetwork) -> Result<Option<(usize, usize)>> {
        match self {
            Self::All => Ok(None),
            Self::LastToken => net.last_token_window().map(Some).ok_or_else(|| {
                Error::InvalidSpec("last-token window needs a sequence model".into())
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionPlan {
    /// Inputs edited per target.
    #[serde(default = "default_count")]
    pub count: usize,
    /// Layers edited together by the ensemble run; empty skips it.
    #[serde(default)]
    pub ensemble_layers: Vec<usize>,
}

fn default_count() -> usize {
    100
}

impl Default for InterventionPlan {
    fn default() -> Self {
        Self {
            count: default_count(),
            ensemble_layers: Vec::new(),
        }
    }
}

fn default_sigmas() -> Vec<f64> {
    vec![0.0, 0.1, 0.5, 1.0]
}

/// Everything the checks need besides the network and data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckPlan {
    /// Modeling function `φ₁` under test.
    pub model: String,
    pub fz: FunctionClass,
    /// Defaults to `fz`.
    #[serde(default)]
    pub fx: Option<FunctionClass>,
    /// Defaults to `fz`.
    #[serde(default)]
    pub fy: Option<FunctionClass>,
    #[serde(default)]
    pub window: ZWindow,
    #[serde(default)]
    pub aspect: AspectSpec,
    #[serde(default)]
    pub phi2: Phi2Kind,
    #[serde(default)]
    pub interventions: InterventionPlan,
    #[serde(default = "default_sigmas")]
    pub off_manifold_sigmas: Vec<f64>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl CheckPlan {
    pub fn new(model: &str, fz: FunctionClass) -> Self {
        Self {
            model: model.into(),
            fz,
            fx: None,
            fy: None,
            window: ZWindow::All,
            aspect: AspectSpec::argmax(),
            phi2: Phi2Kind::Auto,
            interventions: InterventionPlan::default(),
            off_manifold_sigmas: default_sigmas(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn fx(&self) -> FunctionClass {
        self.fx.unwrap_or(self.fz)
    }

    pub fn fy(&self) -> FunctionClass {
        self.fy.unwrap_or(self.fz)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        for c in [self.fz, self.fx(), self.fy()] {
            c.validate()?;
        }
        if self.off_manifold_sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidSpec("off-manifold scales must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Results of one pass through the checklist.
#[derive(Clone, Debug, Default)]
pub struct CheckRun {
    pub results: Vec<CriterionResult>,
    pub g: Option<Probe>,
    pub learned: Option<CompetitorFit>,
    pub phi2: Option<Phi2>,
    pub interventions: Vec<InterventionOutcome>,
    pub off_manifold: Option<OffManifoldCurve>,
}

impl CheckRun {
    pub fn result(&self, criterion: &str) -> Option<&CriterionResult> {
        self.results.iter().find(|r| r.criterion == criterion)
    }
}

const DOWNSTREAM: [&str; 5] = ["learned", "emergent", "causal_complete", "causal_partial", "off_manifold"];

/// Fits `g` at `layer` as the containment check does.
pub fn fit_layer_probe(
    net: &FactoredNetwork,
    layer: usize,
    data: &LabeledDataset,
    plan: &CheckPlan,
    seed: u64,
) -> Result<(CriterionResult, Probe)> {
    let subject = Subject::new(net.split(layer)?, data, &plan.model)?;
    let window = plan.window.resolve(net)?;
    check_containment(&subject, plan.fz, window, &plan.thresholds, seed)
}

/// Verdict-relevant errors become FAIL results instead of aborting.
fn recordable(e: &Error) -> bool {
    matches!(
        e.root(),
        Error::NonconstancyViolated { .. } | Error::UnreachableTarget { .. }
    )
}

/// Runs containment, learned, emergent, causal-complete, causal-partial
/// and off-manifold in order. A failed containment skips the rest.
pub fn run_checks(
    net: &FactoredNetwork,
    layer: usize,
    data: &LabeledDataset,
    plan: &CheckPlan,
    seed: u64,
    scope: &str,
) -> Result<CheckRun> {
    plan.validate()?;
    let th = &plan.thresholds;
    let subject = Subject::new(net.split(layer)?, data, &plan.model).map_err(|e| e.at_stage("split"))?;
    let window = plan.window.resolve(net)?;
    let mut run = CheckRun::default();

    let (contain, g) = check_containment(&subject, plan.fz, window, th, seed)
        .map_err(|e| e.at_stage("containment"))?;
    let passed = contain.verdict == Verdict::Pass;
    run.results.push(contain.with_scope(scope));
    if !passed {
        for c in DOWNSTREAM {
            run.results
                .push(CriterionResult::skipped(c, *th, "containment failed").with_scope(scope));
        }
        run.g = Some(g);
        return Ok(run);
    }

    let (learned, fit) = check_learned(&subject, &g, plan.fx(), th, seed).map_err(|e| e.at_stage("learned"))?;
    run.results.push(learned.with_scope(scope));
    run.learned = Some(fit);

    let (emergent, _) = check_emergent(&subject, &g, plan.fy(), th, seed).map_err(|e| e.at_stage("emergent"))?;
    run.results.push(emergent.with_scope(scope));

    let complete = check_causal_complete(&subject, &g, &plan.aspect, plan.phi2, th, seed)
        .map_err(|e| e.at_stage("causal_complete"))?;
    run.results.push(complete.0.with_scope(scope));

    let mut extra = Vec::new();
    for &l in &plan.interventions.ensemble_layers {
        if l != layer {
            let (_, p) = fit_layer_probe(net, l, data, plan, seed).map_err(|e| e.at_stage("causal_partial"))?;
            extra.push((l, p));
        }
    }
    let mut editors: Vec<LayerEditor<'_>> = plan
        .interventions
        .ensemble_layers
        .iter()
        .map(|&l| LayerEditor {
            layer: l,
            probe: if l == layer {
                &g
            } else {
                &extra.iter().find(|(el, _)| *el == l).expect("fitted").1
            },
        })
        .collect();
    editors.sort_by_key(|e| e.layer);

    let partial = check_causal_partial(
        &subject,
        &g,
        &plan.aspect,
        plan.phi2,
        &editors,
        plan.interventions.count,
        th,
        seed,
    );
    let phi2 = match partial {
        Ok((result, outcome)) => {
            run.results.push(result.with_scope(scope));
            run.interventions.extend(outcome.single);
            run.interventions.extend(outcome.ensemble);
            Some(outcome.phi2)
        }
        Err(e) if recordable(&e) => {
            run.results
                .push(CriterionResult::failed("causal_partial", *th, &e).with_scope(scope));
            None
        }
        Err(e) => return Err(e.at_stage("causal_partial")),
    };

    match &phi2 {
        Some(phi2) => {
            let (off, curve) =
                check_off_manifold(&subject, &g, phi2, &plan.aspect, &plan.off_manifold_sigmas, th, seed)
                    .map_err(|e| e.at_stage("off_manifold"))?;
            run.results.push(off.with_scope(scope));
            run.off_manifold = Some(curve);
        }
        None => run.results.push(
            CriterionResult::skipped("off_manifold", *th, "causal-partial did not produce φ₂").with_scope(scope),
        ),
    }
    run.phi2 = phi2;
    run.g = Some(g);
    Ok(run)
}

/// Reruns the checklist on the rows of `data` inside the restriction and on
/// those outside it. `data` should be drawn from the unrestricted world.
///
/// A part with fewer than the probe minimum of rows is skipped with a
/// notice.
pub fn check_local(
    world: &WorldSpec,
    restriction: &str,
    net: &FactoredNetwork,
    layer: usize,
    data: &LabeledDataset,
    plan: &CheckPlan,
    seed: u64,
) -> Result<Vec<CriterionResult>> {
    restrict(&world.unrestricted(), restriction)?;
    let (name, negate) = match restriction.strip_prefix('!') {
        Some(n) => (n, true),
        None => (restriction, false),
    };
    let mask = data.restriction_masks.get(name).ok_or_else(|| {
        Error::InvalidSpec(format!("dataset carries no mask for restriction `{name}`"))
    })?;
    let (inside, outside): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| mask[i] != negate);
    let mut results = Vec::new();
    for (scope, idx) in [
        (format!("local:{restriction}"), inside),
        (format!("complement:{restriction}"), outside),
    ] {
        if idx.len() < MIN_ROWS {
            let notice = format!("{} rows in {scope}; run skipped", idx.len());
            results.push(CriterionResult::skipped("local", plan.thresholds, notice).with_scope(&scope));
            continue;
        }
        let part = data.select(&idx);
        let run = run_checks(net, layer, &part, plan, seed, &scope)?;
        results.extend(run.results);
    }
    Ok(results)
}
