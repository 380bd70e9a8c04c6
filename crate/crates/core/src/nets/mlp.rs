use super::Activation;
use crate::error::Result;
use crate::numcore::{Matrix, RngStream, Tape, Var};

pub(super) fn param_shapes(dims: &[usize]) -> Vec<(usize, usize)> {
    dims.windows(2)
        .flat_map(|w| [(w[0], w[1]), (1, w[1])])
        .collect()
}

/// Gaussian weights scaled by `1/√fan_in`, zero biases.
pub(super) fn init(dims: &[usize], rng: &mut RngStream) -> Vec<Matrix> {
    dims.windows(2)
        .flat_map(|w| {
            let std = 1.0 / (w[0] as f64).sqrt();
            [rng.normal_matrix(w[0], w[1], std), Matrix::zeros(1, w[1])]
        })
        .collect()
}

pub(super) fn layer_step(
    dims: &[usize],
    residual: bool,
    activation: Activation,
    tape: &mut Tape,
    p: &[Var],
    l: usize,
    h: Var,
) -> Result<Var> {
    let pre = tape.affine(h, p[2 * (l - 1)], Some(p[2 * (l - 1) + 1]))?;
    if l == dims.len() - 1 {
        return Ok(pre);
    }
    let act = match activation {
        Activation::Tanh => tape.tanh(pre),
        Activation::Relu => tape.relu(pre),
        Activation::Identity => pre,
    };
    if residual && dims[l - 1] == dims[l] {
        tape.add(h, act)
    } else {
        Ok(act)
    }
}
