//! Parameter layout and layer computations for the residual sequence model.
//!
//! Parameters, in order: token embedding `[V×d]`, position embedding `[T×d]`,
//! then per block `Wq, Wk, Wv, Wo [d×d]`, `W1 [d×h]`, `b1 [1×h]`,
//! `W2 [h×d]`, `b2 [1×d]`, and finally the read-out `U [d×out]`, `bu [1×out]`.
//! Block activations are laid out as `[batch·T × d]`.

use super::Architecture;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, RngStream, Tape, Var};

const PER_BLOCK: usize = 8;

struct Dims {
    vocab: usize,
    width: usize,
    layers: usize,
    seq_len: usize,
    hidden: usize,
    out: usize,
}

fn dims(arch: &Architecture) -> Dims {
    match arch {
        Architecture::Seqnet {
            vocab,
            width,
            layers,
            seq_len,
            mlp_hidden,
            out_dim,
        } => Dims {
            vocab: *vocab,
            width: *width,
            layers: *layers,
            seq_len: *seq_len,
            hidden: *mlp_hidden,
            out: *out_dim,
        },
        _ => unreachable!("not a sequence model"),
    }
}

pub(super) fn param_shapes(arch: &Architecture) -> Vec<(usize, usize)> {
    let d = dims(arch);
    let mut shapes = vec![(d.vocab, d.width), (d.seq_len, d.width)];
    for _ in 0..d.layers {
        shapes.extend([
            (d.width, d.width),
            (d.width, d.width),
            (d.width, d.width),
            (d.width, d.width),
            (d.width, d.hidden),
            (1, d.hidden),
            (d.hidden, d.width),
            (1, d.width),
        ]);
    }
    shapes.extend([(d.width, d.out), (1, d.out)]);
    shapes
}

pub(super) fn init(arch: &Architecture, rng: &mut RngStream) -> Vec<Matrix> {
    let d = dims(arch);
    let inv = |n: usize| 1.0 / (n as f64).sqrt();
    // Residual branch outputs start small so the stream is not swamped.
    let branch = inv(2 * d.layers);
    let mut params = vec![
        rng.normal_matrix(d.vocab, d.width, 1.0),
        rng.normal_matrix(d.seq_len, d.width, 1.0),
    ];
    for _ in 0..d.layers {
        params.push(rng.normal_matrix(d.width, d.width, inv(d.width)));
        params.push(rng.normal_matrix(d.width, d.width, inv(d.width)));
        params.push(rng.normal_matrix(d.width, d.width, inv(d.width)));
        params.push(rng.normal_matrix(d.width, d.width, inv(d.width) * branch));
        params.push(rng.normal_matrix(d.width, d.hidden, inv(d.width)));
        params.push(Matrix::zeros(1, d.hidden));
        params.push(rng.normal_matrix(d.hidden, d.width, inv(d.hidden) * branch));
        params.push(Matrix::zeros(1, d.width));
    }
    params.push(rng.normal_matrix(d.width, d.out, inv(d.width)));
    params.push(Matrix::zeros(1, d.out));
    params
}

pub(super) fn layer_step(
    arch: &Architecture,
    tape: &mut Tape,
    p: &[Var],
    l: usize,
    h: Var,
    batch: usize,
) -> Result<Var> {
    let d = dims(arch);
    if l == d.layers + 1 {
        let last: Vec<usize> = (0..batch).map(|b| b * d.seq_len + d.seq_len - 1).collect();
        let z = tape.rows(h, &last)?;
        let u = 2 + PER_BLOCK * d.layers;
        return tape.affine(z, p[u], Some(p[u + 1]));
    }
    let stream = if l == 1 { embed(&d, tape, p, h)? } else { h };
    block(&d, tape, &p[2 + PER_BLOCK * (l - 1)..2 + PER_BLOCK * l], stream)
}

fn embed(d: &Dims, tape: &mut Tape, p: &[Var], ids: Var) -> Result<Var> {
    let idv = tape.value(ids);
    let mut one_hot = Matrix::zeros(idv.rows() * d.seq_len, d.vocab);
    for (r, &v) in idv.as_slice().iter().enumerate() {
        let id = v.round();
        if !(0.0..d.vocab as f64).contains(&id) || (v - id).abs() > 1e-9 {
            return Err(Error::shape(format!("token id {v} outside vocabulary of {}", d.vocab)));
        }
        one_hot[(r, id as usize)] = 1.0;
    }
    let one_hot = tape.constant(one_hot);
    let tok = tape.affine(one_hot, p[0], None)?;
    tape.add(tok, p[1])
}

fn block(d: &Dims, tape: &mut Tape, p: &[Var], h: Var) -> Result<Var> {
    let q = tape.affine(h, p[0], None)?;
    let k = tape.affine(h, p[1], None)?;
    let v = tape.affine(h, p[2], None)?;
    let mixed = tape.attention(q, k, v, d.seq_len)?;
    let attn_out = tape.affine(mixed, p[3], None)?;
    let h1 = tape.add(h, attn_out)?;
    let pre = tape.affine(h1, p[4], Some(p[5]))?;
    let act = tape.relu(pre);
    let mlp_out = tape.affine(act, p[6], Some(p[7]))?;
    tape.add(h1, mlp_out)
}

/// Read-out `f₂` from the last token's final-block embedding.
pub(super) fn readout(arch: &Architecture, params: &[Matrix], z: &Matrix) -> Result<Matrix> {
    let d = dims(arch);
    if z.cols() != d.width {
        return Err(Error::shape(format!(
            "last-token read-out expects width {}, got {}",
            d.width,
            z.cols()
        )));
    }
    let u = 2 + PER_BLOCK * d.layers;
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let w = tape.constant(params[u].clone());
    let b = tape.constant(params[u + 1].clone());
    let out = tape.affine(zv, w, Some(b))?;
    Ok(tape.value(out).clone())
}
