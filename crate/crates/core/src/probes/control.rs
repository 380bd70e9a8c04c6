//! Random control functions: does `f₁` do more than a random affine map?

use serde::{Deserialize, Serialize};

use super::{fit_probe, FunctionClass, Probe};
use crate::error::{Error, Result};
use crate::numcore::rng::streams;
use crate::numcore::{Matrix, RngStream};

/// A fixed random affine map `X → Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlFunction {
    pub seed: u64,
    pub w: Matrix,
    pub b: Matrix,
}

impl ControlFunction {
    pub fn new(seed: u64, input_dim: usize, output_dim: usize) -> Self {
        let mut rng = RngStream::new(seed, streams::CONTROL);
        let w = rng.normal_matrix(input_dim, output_dim, 1.0 / (input_dim.max(1) as f64).sqrt());
        let b = rng.normal_matrix(1, output_dim, 1.0);
        Self { seed, w, b }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.w)?.add_row_broadcast(&self.b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub seed: u64,
    /// Heldout error of `g` against the modeling function.
    pub g_error: f64,
    /// Heldout error of the best `g′` on the control features against `g∘f₁`.
    pub control_error: f64,
    pub control_score: f64,
    pub margin: f64,
    /// `control_error − g_error ≥ margin`.
    pub f1_nontrivial: bool,
    pub z_dim: usize,
    pub n_train: usize,
    /// The control features have at least as many columns as training rows,
    /// so a linear `g′` can interpolate anything.
    pub underdetermined: bool,
}

/// Fits `g′ ∈ class` on `f_random(x)` against `g(z)` where `z = f₁(x)`.
pub fn control_function_test(
    x: &Matrix,
    z: &Matrix,
    class: FunctionClass,
    g: &Probe,
    seed: u64,
    margin: f64,
) -> Result<ControlRecord> {
    if x.rows() != z.rows() {
        return Err(Error::shape("control test needs one z row per input row"));
    }
    let targets = g.predict(z)?;
    let control = ControlFunction::new(seed, x.cols(), g.read_dim());
    let features = control.apply(x)?;
    let g_prime = fit_probe(class, &features, &targets, seed)?;
    let g_error = g.diagnostics.heldout_error;
    let control_error = g_prime.diagnostics.heldout_error;
    Ok(ControlRecord {
        seed,
        g_error,
        control_error,
        control_score: g_prime.diagnostics.heldout_score,
        margin,
        f1_nontrivial: control_error - g_error >= margin,
        z_dim: g.read_dim(),
        n_train: g_prime.diagnostics.n_train,
        underdetermined: g.read_dim() + 1 >= g_prime.diagnostics.n_train,
    })
}
