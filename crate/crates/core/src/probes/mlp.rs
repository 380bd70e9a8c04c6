use super::linear::{standardize, standardizer};
use super::{ProbeParams, ProbeTargets, TaskMode};
use crate::error::Result;
use crate::numcore::{grad, Matrix, RngStream, Tape, Var};

pub(super) const EPOCHS: usize = 200;
const LEARNING_RATE: f64 = 0.05;
const BATCH: usize = 32;

fn build(tape: &mut Tape, p: &[Var], x: Matrix) -> Result<Var> {
    let x = tape.constant(x);
    let h = tape.affine(x, p[0], Some(p[1]))?;
    let h = tape.tanh(h);
    tape.affine(h, p[2], Some(p[3]))
}

/// SGD on one hidden layer for a fixed budget of epochs.
pub(super) fn fit(
    x: &Matrix,
    targets: &ProbeTargets,
    mode: TaskMode,
    hidden: usize,
    rng: &mut RngStream,
) -> Result<(ProbeParams, f64)> {
    let (mean, scale) = standardizer(x);
    let xs = standardize(x, &mean, &scale);
    let y = targets.as_matrix();
    let (d, k) = (x.cols(), y.cols());
    let mut params = vec![
        rng.normal_matrix(d, hidden, 1.0 / (d as f64).sqrt()),
        Matrix::zeros(1, hidden),
        rng.normal_matrix(hidden, k, 1.0 / (hidden as f64).sqrt()),
        Matrix::zeros(1, k),
    ];
    let labels = match (mode, targets) {
        (TaskMode::Classification, ProbeTargets::Labels { labels, .. }) => Some(labels.clone()),
        _ => None,
    };
    let loss_of = |tape: &mut Tape, p: &[Var], rows: &[usize]| -> Result<Var> {
        let out = build(tape, p, xs.select_rows(rows))?;
        match &labels {
            Some(l) => tape.cross_entropy(out, &rows.iter().map(|&i| l[i]).collect::<Vec<_>>()),
            None => tape.squared_error(out, &y.select_rows(rows)),
        }
    };
    for _ in 0..EPOCHS {
        let order = rng.permutation(x.rows());
        for chunk in order.chunks(BATCH) {
            let (_, g) = grad(&params, |tape, p| loss_of(tape, p, chunk))?;
            for (p, g) in params.iter_mut().zip(&g) {
                p.add_assign_scaled(g, -LEARNING_RATE);
            }
        }
    }
    let all: Vec<usize> = (0..x.rows()).collect();
    let (objective, _) = grad(&params, |tape, p| loss_of(tape, p, &all))?;
    let [w1, b1, w2, b2]: [Matrix; 4] = params.try_into().expect("four parameters");
    Ok((
        ProbeParams::Mlp {
            mean,
            scale,
            w1,
            b1,
            w2,
            b2,
        },
        objective,
    ))
}

pub(super) fn forward(
    z: &Matrix,
    mean: &[f64],
    scale: &[f64],
    w1: &Matrix,
    b1: &Matrix,
    w2: &Matrix,
    b2: &Matrix,
) -> Result<Matrix> {
    standardize(z, mean, scale)
        .matmul(w1)?
        .add_row_broadcast(b1)?
        .map(f64::tanh)
        .matmul(w2)?
        .add_row_broadcast(b2)
}
