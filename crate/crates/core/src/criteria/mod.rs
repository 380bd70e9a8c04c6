//! The checklist engine.
//!
//! Each check returns a [`CriterionResult`] whose verdict is a pure function
//! of the recorded scores and thresholds; [`CriterionResult::rederive`]
//! recomputes it. Checks operate on a [`Subject`]: a network factored at one
//! layer together with a dataset and the name of the modeling function under
//! test.

mod aspect;
mod bundle;
mod checks;
mod intervene;
mod output;
mod phi2;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use aspect::{Aspect, AspectSpec};
pub use bundle::{check_local, fit_layer_probe, run_checks, CheckPlan, CheckRun, InterventionPlan, ZWindow};
pub use checks::{
    check_causal_complete, check_causal_partial, check_containment, check_emergent, check_learned,
    check_off_manifold, CompetitorFit, OffManifoldCurve, PartialOutcome,
};
pub use intervene::{
    edit_targets, run_interventions, success_rate, InterventionOutcome, LayerEditor,
};
pub use output::{interventions_csv, read_results_json, write_interventions_csv, write_results_json, SCHEMA_VERSION};
pub use phi2::{Phi2, Phi2Kind};

use crate::error::{Error, Result};
use crate::nets::Cutoff;
use crate::numcore::Matrix;
use crate::probes::ProbeTargets;
use crate::worlds::{LabeledDataset, ModelKind};

/// Tolerances for every verdict. All values lie in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Minimum heldout accuracy (or R²) for containment.
    #[serde(default = "defaults::contain")]
    pub contain: f64,
    /// Required gap for learned/emergent and over the shuffle baseline.
    #[serde(default = "defaults::margin")]
    pub margin: f64,
    /// Maximum mismatch rate for the causal checks.
    #[serde(default = "defaults::causal")]
    pub causal: f64,
    /// Minimum entropy (nats) of the output aspect.
    #[serde(default = "defaults::nonconst")]
    pub nonconst: f64,
    /// Minimum intervention success rate for causal-partial.
    #[serde(default = "defaults::intervention_floor")]
    pub intervention_floor: f64,
}

mod defaults {
    pub fn contain() -> f64 {
        0.9
    }
    pub fn margin() -> f64 {
        0.1
    }
    pub fn causal() -> f64 {
        0.05
    }
    pub fn nonconst() -> f64 {
        0.1
    }
    pub fn intervention_floor() -> f64 {
        0.9
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            contain: defaults::contain(),
            margin: defaults::margin(),
            causal: defaults::causal(),
            nonconst: defaults::nonconst(),
            intervention_floor: defaults::intervention_floor(),
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("contain", self.contain),
            ("margin", self.margin),
            ("causal", self.causal),
            ("nonconst", self.nonconst),
            ("intervention_floor", self.intervention_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSpec(format!("threshold `{name}` = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

/// How a verdict follows from the recorded numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `score ≥ contain` and `score − shuffle ≥ margin`.
    Containment,
    /// `d = reference − score`: PASS iff `d ≥ margin`. Inexact classes
    /// report INCONCLUSIVE for `margin/2 ≤ d < margin`.
    Competitor { exact: bool },
    /// `error ≤ causal`.
    MaxMismatch,
    /// Agreement `≥ 1 − causal`, intervention success `≥ floor` and
    /// aspect entropy `≥ nonconst`.
    CausalPartial,
    /// Verdict was fixed without a numeric rule (skips, errors).
    Fixed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub chance: Option<f64>,
    pub shuffle: Option<f64>,
    pub control: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: String,
    /// `global`, `local:<restriction>`, `complement:<restriction>` or
    /// `layer:<l>`.
    pub scope: String,
    /// Human label of the verdict (`LEARNED`, `NOT-EMERGENT`, ...).
    pub label: String,
    pub verdict: Verdict,
    pub rule: Rule,
    pub score: f64,
    pub error: f64,
    /// Score the primary score is compared against, when there is one.
    pub reference: Option<f64>,
    pub baselines: Baselines,
    /// Secondary numbers the rule reads.
    pub metrics: BTreeMap<String, f64>,
    pub thresholds: Thresholds,
    pub evidence: Value,
    pub notice: Option<String>,
}

impl CriterionResult {
    pub(crate) fn new(criterion: &str, rule: Rule, score: f64, error: f64, thresholds: Thresholds) -> Self {
        let mut r = Self {
            criterion: criterion.to_string(),
            scope: "global".into(),
            label: String::new(),
            verdict: Verdict::Skipped,
            rule,
            score,
            error,
            reference: None,
            baselines: Baselines::default(),
            metrics: BTreeMap::new(),
            thresholds,
            evidence: Value::Null,
            notice: None,
        };
        r.settle();
        r
    }

    /// A result that records a check that did not run.
    pub fn skipped(criterion: &str, thresholds: Thresholds, notice: impl Into<String>) -> Self {
        let mut r = Self::new(criterion, Rule::Fixed, 0.0, 0.0, thresholds);
        r.verdict = Verdict::Skipped;
        r.label = "SKIPPED".into();
        r.notice = Some(notice.into());
        r
    }

    /// A failed check that raised a verdict-relevant error.
    pub fn failed(criterion: &str, thresholds: Thresholds, err: &Error) -> Self {
        let mut r = Self::new(criterion, Rule::Fixed, 0.0, 1.0, thresholds);
        r.verdict = Verdict::Fail;
        r.label = "FAIL".into();
        r.notice = Some(err.to_string());
        r
    }

    pub(crate) fn with_scope(mut self, scope: &str) -> Self {
        self.scope = scope.to_string();
        self
    }

    pub(crate) fn with_reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self.settle();
        self
    }

    pub(crate) fn with_metric(mut self, key: &str, v: f64) -> Self {
        self.metrics.insert(key.to_string(), v);
        self.settle();
        self
    }

    pub(crate) fn with_baselines(mut self, b: Baselines) -> Self {
        self.baselines = b;
        self.settle();
        self
    }

    pub(crate) fn with_evidence(mut self, evidence: Value) -> Self {
        self.evidence = evidence;
        self
    }

    fn settle(&mut self) {
        if self.rule != Rule::Fixed {
            self.verdict = self.rederive();
            self.label = label_for(&self.criterion, self.verdict);
        }
    }

    /// The verdict implied by the recorded numbers.
    pub fn rederive(&self) -> Verdict {
        let t = &self.thresholds;
        match self.rule {
            Rule::Fixed => self.verdict,
            Rule::Containment => {
                let shuffle = self.baselines.shuffle.unwrap_or(f64::NEG_INFINITY);
                if self.score >= t.contain && self.score - shuffle >= t.margin {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
            Rule::Competitor { exact } => {
                let Some(reference) = self.reference else {
                    return Verdict::Inconclusive;
                };
                let d = reference - self.score;
                if d >= t.margin {
                    Verdict::Pass
                } else if !exact && d >= t.margin / 2.0 {
                    Verdict::Inconclusive
                } else {
                    Verdict::Fail
                }
            }
            Rule::MaxMismatch => {
                if self.error <= t.causal {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
            Rule::CausalPartial => {
                let metric = |k: &str| self.metrics.get(k).copied().unwrap_or(f64::NEG_INFINITY);
                if metric("aspect_entropy") >= t.nonconst
                    && self.score >= 1.0 - t.causal
                    && metric("intervention_success") >= t.intervention_floor
                {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
        }
    }
}

fn label_for(criterion: &str, v: Verdict) -> String {
    let base = criterion.rsplit(':').next().unwrap_or(criterion);
    let named = match base {
        "learned" => Some("LEARNED"),
        "emergent" => Some("EMERGENT"),
        _ => None,
    };
    match (named, v) {
        (Some(n), Verdict::Pass) => n.to_string(),
        (Some(n), Verdict::Fail) => format!("NOT-{n}"),
        (_, Verdict::Pass) => "PASS".into(),
        (_, Verdict::Fail) => "FAIL".into(),
        (_, Verdict::Inconclusive) => "INCONCLUSIVE".into(),
        (_, Verdict::Skipped) => "SKIPPED".into(),
    }
}

/// A network factored at one layer, a dataset, and the modeling function
/// under test, with `Z = f₁(X)` and `Y = f₂(Z)` evaluated once.
pub struct Subject<'a> {
    pub cut: Cutoff<'a>,
    pub data: &'a LabeledDataset,
    pub model: String,
    pub z: Matrix,
    pub y: Matrix,
    pub targets: ProbeTargets,
}

impl<'a> Subject<'a> {
    pub fn new(cut: Cutoff<'a>, data: &'a LabeledDataset, model: &str) -> Result<Self> {
        let column = data.model(model)?;
        let targets = match column.kind {
            ModelKind::Categorical(n) => {
                ProbeTargets::labels(column.labels.clone().expect("categorical labels"), n)
            }
            ModelKind::Continuous(_) => ProbeTargets::Values(column.values.clone()),
        };
        let z = cut.forward_f1(&data.inputs)?;
        let y = cut.forward_f2(&z)?;
        Ok(Self {
            cut,
            data,
            model: model.to_string(),
            z,
            y,
            targets,
        })
    }

    pub fn rows(&self) -> usize {
        self.z.rows()
    }
}

#[cfg(test)]
mod tests;
