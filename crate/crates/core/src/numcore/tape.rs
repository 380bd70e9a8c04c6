//! Reverse-mode differentiation over a fixed vocabulary of matrix ops.
//!
//! A [`Tape`] evaluates eagerly: each recorded op computes its value on push,
//! and [`Tape::backward`] walks the node list in reverse accumulating
//! adjoints. Nodes only reference earlier nodes, so list order is a
//! topological order by construction.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(usize),
    /// `x·W (+ b)`, bias broadcast over rows.
    Affine { x: Var, w: Var, b: Option<Var> },
    Tanh(Var),
    Relu(Var),
    /// Row-wise softmax.
    Softmax(Var),
    /// Mean over rows of `−log softmax(logits)[label]`.
    CrossEntropy { logits: Var, labels: Vec<usize> },
    /// Mean over rows of `Σ_j (pred − target)²`.
    SquaredError { pred: Var, target: Matrix },
    /// `a + b`, where `b` is tiled down the rows when its row count divides `a`'s.
    Add(Var, Var),
    Scale(Var, f64),
    /// Column-wise concatenation.
    Concat(Vec<Var>),
    SliceCols { x: Var, start: usize, len: usize },
    /// Row gather.
    Rows { x: Var, indices: Vec<usize> },
    /// Causal single-head attention within consecutive blocks of `block` rows:
    /// `softmax(q·kᵀ/√d + mask)·v`.
    Attention {
        q: Var,
        k: Var,
        v: Var,
        block: usize,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
    /// Attention probabilities (stacked per block) or softmax cache.
    aux: Option<Matrix>,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    n_params: usize,
    first_nonfinite: Option<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Index of the first node whose value contained NaN or ±∞.
    pub fn first_nonfinite(&self) -> Option<usize> {
        self.first_nonfinite
    }

    fn push(&mut self, op: Op, value: Matrix, aux: Option<Matrix>) -> Var {
        let idx = self.nodes.len();
        if self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some(idx);
        }
        self.nodes.push(Node { op, value, aux });
        Var(idx)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Constant, value, None)
    }

    /// Registers a differentiable parameter. Parameters are numbered in
    /// registration order; [`Tape::backward`] returns gradients in that order.
    pub fn param(&mut self, value: Matrix) -> Var {
        let slot = self.n_params;
        self.n_params += 1;
        self.push(Op::Param(slot), value, None)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let mut out = self.value(x).matmul(self.value(w))?;
        if let Some(b) = b {
            out = out.add_row_broadcast(self.value(b))?;
        }
        Ok(self.push(Op::Affine { x, w, b }, out, None))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), out, None)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), out, None)
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        self.push(Op::Softmax(x), out, None)
    }

    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != labels.len() || lv.rows() == 0 {
            return Err(Error::shape(format!(
                "cross-entropy over {} rows with {} labels",
                lv.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= lv.cols()) {
            return Err(Error::shape(format!(
                "label {bad} out of range for {} classes",
                lv.cols()
            )));
        }
        let probs = softmax_rows(lv);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(r, &l)| -probs[(r, l)].ln())
            .sum::<f64>()
            / labels.len() as f64;
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            Matrix::filled(1, 1, loss),
            Some(probs),
        ))
    }

    pub fn squared_error(&mut self, pred: Var, target: &Matrix) -> Result<Var> {
        let diff = self.value(pred).sub(target)?;
        let loss = diff.frobenius_sq() / diff.rows().max(1) as f64;
        Ok(self.push(
            Op::SquaredError {
                pred,
                target: target.clone(),
            },
            Matrix::filled(1, 1, loss),
            None,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() || bv.rows() == 0 || av.rows() % bv.rows() != 0 {
            return Err(Error::shape(format!(
                "add {:?} + {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut out = av.clone();
        let br = bv.rows();
        for r in 0..out.rows() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(bv.row(r % br)) {
                *o += x;
            }
        }
        Ok(self.push(Op::Add(a, b), out, None))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).scale(factor);
        self.push(Op::Scale(x, factor), out, None)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::hcat(&mats)?;
        Ok(self.push(Op::Concat(parts.to_vec()), out, None))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > self.value(x).cols() {
            return Err(Error::shape("column slice out of range"));
        }
        let out = self.value(x).select_cols(start, len);
        Ok(self.push(Op::SliceCols { x, start, len }, out, None))
    }

    pub fn rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        if indices.iter().any(|&i| i >= self.value(x).rows()) {
            return Err(Error::shape("row gather out of range"));
        }
        let out = self.value(x).select_rows(indices);
        Ok(self.push(
            Op::Rows {
                x,
                indices: indices.to_vec(),
            },
            out,
            None,
        ))
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, block: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let n = qv.rows();
        if block == 0
            || n % block != 0
            || kv.rows() != n
            || vv.rows() != n
            || qv.cols() != kv.cols()
        {
            return Err(Error::shape(format!(
                "attention q {:?} k {:?} v {:?} block {block}",
                qv.shape(),
                kv.shape(),
                vv.shape()
            )));
        }
        let inv_sqrt = 1.0 / (qv.cols() as f64).sqrt();
        let mut probs = Matrix::zeros(n, block);
        let mut out = Matrix::zeros(n, vv.cols());
        for start in (0..n).step_by(block) {
            for i in 0..block {
                let qi = qv.row(start + i);
                let prow = probs.row_mut(start + i);
                let mut max = f64::NEG_INFINITY;
                for j in 0..=i {
                    let s = dot(qi, kv.row(start + j)) * inv_sqrt;
                    prow[j] = s;
                    max = max.max(s);
                }
                let mut z = 0.0;
                for p in prow.iter_mut().take(i + 1) {
                    *p = (*p - max).exp();
                    z += *p;
                }
                for p in prow.iter_mut().take(i + 1) {
                    *p /= z;
                }
                let orow = out.row_mut(start + i);
                for j in 0..=i {
                    let pj = probs[(start + i, j)];
                    for (o, &x) in orow.iter_mut().zip(vv.row(start + j)) {
                        *o += pj * x;
                    }
                }
            }
        }
        Ok(self.push(Op::Attention { q, k, v, block }, out, Some(probs)))
    }

    /// Gradients of the scalar `loss` with respect to every parameter, in
    /// registration order.
    pub fn backward(&self, loss: Var) -> Result<Vec<Matrix>> {
        if let Some(node) = self.first_nonfinite {
            if node <= loss.0 {
                return Err(Error::NumericOverflow { node });
            }
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape("backward needs a scalar loss"));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut grads: Vec<Matrix> = Vec::new();
        grads.resize(self.n_params, Matrix::zeros(0, 0));
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param(slot) => grads[*slot] = g,
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    accumulate(&mut adj, *x, g.matmul_t(wv)?);
                    accumulate(&mut adj, *w, xv.t_matmul(&g)?);
                    if let Some(b) = b {
                        accumulate(&mut adj, *b, Matrix::row_vector(&g.col_sums()));
                    }
                }
                Op::Tanh(x) => {
                    let d = g.zip_with(&node.value, |gv, y| gv * (1.0 - y * y))?;
                    accumulate(&mut adj, *x, d);
                }
                Op::Relu(x) => {
                    let d = g.zip_with(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut adj, *x, d);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let s = dot(g.row(r), y.row(r));
                        for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                            *dv = y[(r, c)] * (g[(r, c)] - s);
                        }
                    }
                    accumulate(&mut adj, *x, d);
                }
                Op::CrossEntropy { logits, labels } => {
                    let probs = node.aux.as_ref().expect("cross-entropy cache");
                    let scale = g[(0, 0)] / labels.len() as f64;
                    let mut d = probs.clone();
                    for (r, &l) in labels.iter().enumerate() {
                        d[(r, l)] -= 1.0;
                    }
                    accumulate(&mut adj, *logits, d.scale(scale));
                }
                Op::SquaredError { pred, target } => {
                    let pv = self.value(*pred);
                    let scale = 2.0 * g[(0, 0)] / pv.rows().max(1) as f64;
                    accumulate(&mut adj, *pred, pv.sub(target)?.scale(scale));
                }
                Op::Add(a, b) => {
                    let bv = self.value(*b);
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    let br = bv.rows();
                    for r in 0..g.rows() {
                        for (d, &x) in db.row_mut(r % br).iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut adj, *a, g);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale(x, f) => accumulate(&mut adj, *x, g.scale(*f)),
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let len = self.value(p).cols();
                        accumulate(&mut adj, p, g.select_cols(start, len));
                        start += len;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let xv = self.value(*x);
                    let mut d = Matrix::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        d.row_mut(r)[*start..start + len].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut adj, *x, d);
                }
                Op::Rows { x, indices } => {
                    let xv = self.value(*x);
                    let mut d = Matrix::zeros(xv.rows(), xv.cols());
                    for (r, &i) in indices.iter().enumerate() {
                        for (dv, &gv) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                            *dv += gv;
                        }
                    }
                    accumulate(&mut adj, *x, d);
                }
                Op::Attention { q, k, v, block } => {
                    let probs = node.aux.as_ref().expect("attention cache");
                    let (dq, dk, dv) = attention_backward(
                        self.value(*q),
                        self.value(*k),
                        self.value(*v),
                        probs,
                        &g,
                        *block,
                    );
                    accumulate(&mut adj, *q, dq);
                    accumulate(&mut adj, *k, dk);
                    accumulate(&mut adj, *v, dv);
                }
            }
        }
        // Parameters the loss does not depend on get zero gradients.
        for (slot, g) in grads.iter_mut().enumerate() {
            if g.is_empty() {
                let shape = self
                    .nodes
                    .iter()
                    .find_map(|n| match n.op {
                        Op::Param(s) if s == slot => Some(n.value.shape()),
                        _ => None,
                    })
                    .unwrap_or((0, 0));
                *g = Matrix::zeros(shape.0, shape.1);
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign_scaled(&d, 1.0),
        slot @ None => *slot = Some(d),
    }
}

pub(crate) fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

fn attention_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    probs: &Matrix,
    g: &Matrix,
    block: usize,
) -> (Matrix, Matrix, Matrix) {
    let n = q.rows();
    let inv_sqrt = 1.0 / (q.cols() as f64).sqrt();
    let mut dq = Matrix::zeros(n, q.cols());
    let mut dk = Matrix::zeros(n, k.cols());
    let mut dv = Matrix::zeros(n, v.cols());
    let mut ds_row = vec![0.0; block];
    for start in (0..n).step_by(block) {
        for i in 0..block {
            let gi = g.row(start + i);
            // dP_ij = g_i · v_j ; dS_ij = P_ij (dP_ij − Σ_l P_il dP_il)
            let mut weighted = 0.0;
            for j in 0..=i {
                let dp = dot(gi, v.row(start + j));
                ds_row[j] = dp;
                weighted += probs[(start + i, j)] * dp;
            }
            for j in 0..=i {
                let p = probs[(start + i, j)];
                let ds = p * (ds_row[j] - weighted) * inv_sqrt;
                for (d, &x) in dv.row_mut(start + j).iter_mut().zip(gi) {
                    *d += p * x;
                }
                if ds != 0.0 {
                    let kj = k.row(start + j).to_vec();
                    for (d, x) in dq.row_mut(start + i).iter_mut().zip(&kj) {
                        *d += ds * x;
                    }
                    let qi = q.row(start + i).to_vec();
                    for (d, x) in dk.row_mut(start + j).iter_mut().zip(&qi) {
                        *d += ds * x;
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Loss value and parameter gradients for a loss built on a fresh tape.
///
/// `build` receives the tape and one parameter handle per entry of `params`
/// and returns the scalar loss node.
pub fn grad<F>(params: &[Matrix], build: F) -> Result<(f64, Vec<Matrix>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss)[(0, 0)], grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let (loss, g) = grad(&[Matrix::filled(1, 1, 3.0)], |t, p| {
            let zero = Matrix::zeros(1, 1);
            t.squared_error(p[0], &zero)
        })
        .unwrap();
        assert_eq!(loss, 9.0);
        assert!((g[0][(0, 0)] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_cross_entropy() {
        let (_, g) = grad(&[Matrix::zeros(1, 2)], |t, p| t.cross_entropy(p[0], &[0])).unwrap();
        assert!((g[0][(0, 0)] + 0.5).abs() < 1e-12);
        assert!((g[0][(0, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overflow_reports_node() {
        let mut t = Tape::new();
        let x = t.param(Matrix::filled(1, 1, f64::MAX));
        let y = t.scale(x, 10.0);
        let loss = t.squared_error(y, &Matrix::zeros(1, 1)).unwrap();
        match t.backward(loss) {
            Err(Error::NumericOverflow { node }) => assert_eq!(node, y.index()),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let (_, g) = grad(&[Matrix::filled(1, 1, 2.0), Matrix::filled(2, 3, 1.0)], |t, p| {
            t.squared_error(p[0], &Matrix::zeros(1, 1))
        })
        .unwrap();
        assert_eq!(g[1], Matrix::zeros(2, 3));
    }

    #[test]
    fn attention_is_causal() {
        let mut t = Tape::new();
        let q = t.constant(Matrix::from_fn(4, 2, |r, c| (r + c) as f64 * 0.3));
        let k = t.constant(Matrix::from_fn(4, 2, |r, c| (r * c) as f64 * 0.1));
        let v = t.constant(Matrix::from_fn(4, 2, |r, c| (r as f64) - c as f64));
        let out = t.attention(q, k, v, 4).unwrap();
        // First position can only attend to itself.
        assert_eq!(t.value(out).row(0), t.value(v).row(0));
    }
}
