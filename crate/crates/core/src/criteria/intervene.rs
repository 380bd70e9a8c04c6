use serde::{Deserialize, Serialize};

use super::{AspectSpec, Phi2};
use crate::error::{Error, Result};
use crate::nets::{FactoredNetwork, InterventionHook};
use crate::numcore::rng::streams;
use crate::numcore::{Matrix, RngStream};
use crate::probes::{EditTarget, Probe, ProbeOutput, ProbeTargets};

/// A probe used to edit the activations of one layer.
#[derive(Clone, Copy)]
pub struct LayerEditor<'a> {
    pub layer: usize,
    pub probe: &'a Probe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionOutcome {
    /// Row of the dataset the input came from.
    pub input: usize,
    pub target: String,
    pub layers: Vec<usize>,
    pub pre_aspect: f64,
    pub post_aspect: f64,
    /// `φ₂(m′)` read through the aspect.
    pub expected: f64,
    /// The input already had model value `m′`; excluded from rates.
    pub noop: bool,
    pub success: bool,
}

/// Counterfactual targets: every class of a finite model, or `count` model
/// values observed on other inputs for a real-valued one.
pub fn edit_targets(output: ProbeOutput, observed: &ProbeTargets, count: usize, seed: u64) -> Vec<EditTarget> {
    match (output, observed) {
        (ProbeOutput::Labels(k), _) => (0..k).map(EditTarget::Label).collect(),
        (ProbeOutput::Values(_), obs) => {
            let m = obs.as_matrix();
            let mut perm = RngStream::new(seed, streams::INTERVENTION)
                .substream(1)
                .permutation(m.rows());
            perm.truncate(count);
            perm.into_iter()
                .map(|r| EditTarget::Value(m.row(r).to_vec()))
                .collect()
        }
    }
}

fn describe(t: &EditTarget) -> String {
    match t {
        EditTarget::Label(m) => m.to_string(),
        EditTarget::Value(v) => format!("{v:?}"),
    }
}

/// Edits `n` sampled inputs toward every target and records whether the
/// output aspect becomes `φ₂(m′)`.
///
/// All editors act in one forward pass, so a multi-layer set edits each
/// layer with its own probe. The last editor decides which inputs already
/// hold `m′`.
#[allow(clippy::too_many_arguments)]
pub fn run_interventions(
    net: &FactoredNetwork,
    editors: &[LayerEditor<'_>],
    phi2: &Phi2,
    aspect: &AspectSpec,
    inputs: &Matrix,
    targets: &[EditTarget],
    n: usize,
    seed: u64,
) -> Result<Vec<InterventionOutcome>> {
    let Some(primary) = editors.last() else {
        return Err(Error::InvalidSpec("intervention needs at least one edited layer".into()));
    };
    let mut rows = RngStream::new(seed, streams::INTERVENTION).permutation(inputs.rows());
    rows.truncate(n);
    rows.sort_unstable();
    let x = inputs.select_rows(&rows);
    let pre = aspect.of_outputs(&net.forward(&x)?);
    let current = primary
        .probe
        .predict(&net.forward_range(&x, 0, primary.layer, None)?)?;
    let layers: Vec<usize> = editors.iter().map(|e| e.layer).collect();

    let mut out = Vec::with_capacity(rows.len() * targets.len());
    for target in targets {
        let mapped = match target {
            EditTarget::Label(m) => phi2.apply_label(*m),
            EditTarget::Value(v) => phi2.apply_value(v),
        };
        // φ₂ is undefined on model values the probe never produced.
        let Some(mapped) = mapped else { continue };
        let expected = aspect.decode(&mapped);
        let hook = InterventionHook::new(layers.iter().copied(), |l, act, _| {
            let e = editors.iter().find(|e| e.layer == l).expect("hooked layer has an editor");
            e.probe.edit(act, target)
        });
        let y = net.forward_with_intervention(&x, &hook)?;
        let post = aspect.of_outputs(&y);
        for (i, &row) in rows.iter().enumerate() {
            let noop = match (&current, target) {
                (ProbeTargets::Labels { labels, .. }, EditTarget::Label(m)) => labels[i] == *m,
                (ProbeTargets::Values(v), EditTarget::Value(t)) => v.row(i) == t.as_slice(),
                _ => false,
            };
            out.push(InterventionOutcome {
                input: row,
                target: describe(target),
                layers: layers.clone(),
                pre_aspect: pre[i],
                post_aspect: post[i],
                expected,
                noop,
                success: aspect.agree(post[i], expected),
            });
        }
    }
    Ok(out)
}

/// Success rate over outcomes that actually changed the model value; `None`
/// if every outcome was a no-op.
pub fn success_rate(outcomes: &[InterventionOutcome]) -> Option<f64> {
    let live: Vec<_> = outcomes.iter().filter(|o| !o.noop).collect();
    if live.is_empty() {
        return None;
    }
    Some(live.iter().filter(|o| o.success).count() as f64 / live.len() as f64)
}
