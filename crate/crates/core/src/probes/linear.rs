//! Linear probes: least squares for values, multinomial logistic regression
//! for labels.

use super::ProbeTargets;
use crate::error::Result;
use crate::numcore::tape::softmax_rows;
use crate::numcore::{solve_least_squares, Matrix};

/// Ridge added to least-squares fits; keeps collinear designs (one-hot blocks
/// next to the bias column) solvable without visibly moving the optimum.
pub const RIDGE: f64 = 1e-8;
/// L2 penalty on standardized logistic weights.
pub const LOGISTIC_L2: f64 = 1e-2;
pub const LOGISTIC_MAX_ITER: usize = 10_000;
pub const LOGISTIC_TOL: f64 = 1e-6;
/// Iterations between convergence checks.
const CHECK_EVERY: usize = 10;

fn with_bias(x: &Matrix) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols() + 1, |r, c| if c < x.cols() { x[(r, c)] } else { 1.0 })
}

/// `(w, b, mean squared error per row)`.
pub(super) fn fit_regression(x: &Matrix, y: &Matrix) -> Result<(Matrix, Matrix, f64)> {
    let design = with_bias(x);
    let coef = solve_least_squares(&design, y, RIDGE)?;
    let d = x.cols();
    let w = Matrix::from_fn(d, y.cols(), |r, c| coef[(r, c)]);
    let b = Matrix::from_fn(1, y.cols(), |_, c| coef[(d, c)]);
    let resid = design.matmul(&coef)?.sub(y)?;
    Ok((w, b, resid.frobenius_sq() / x.rows().max(1) as f64))
}

pub(super) struct LogisticFit {
    pub w: Matrix,
    pub b: Matrix,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Column means and scales; constant columns get scale 1.
pub(super) fn standardizer(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let mean = x.col_means();
    let n = x.rows().max(1) as f64;
    let mut var = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (c, v) in x.row(r).iter().enumerate() {
            var[c] += (v - mean[c]).powi(2) / n;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, scale)
}

pub(super) fn standardize(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |r, c| (x[(r, c)] - mean[c]) / scale[c])
}

/// Largest eigenvalue of `AᵀA / n` by power iteration.
fn gram_spectral_bound(a: &Matrix) -> Result<f64> {
    let n = a.rows().max(1) as f64;
    let mut v = Matrix::filled(a.cols(), 1, 1.0 / (a.cols() as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let av = a.matmul(&v)?;
        let w = a.t_matmul(&av)?.scale(1.0 / n);
        let norm = w.frobenius_sq().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = w.scale(1.0 / norm);
        let done = (norm - lambda).abs() <= 1e-9 * norm;
        lambda = norm;
        v = next;
        if done {
            break;
        }
    }
    // Power iteration approaches from below; pad so the step stays safe.
    Ok(lambda * 1.05)
}

fn logistic_loss_grad(a: &Matrix, y: &Matrix, theta: &Matrix, d: usize) -> Result<(f64, Matrix)> {
    let n = a.rows() as f64;
    let logits = a.matmul(theta)?;
    let p = softmax_rows(&logits);
    let mut loss = 0.0;
    for r in 0..a.rows() {
        for c in 0..y.cols() {
            if y[(r, c)] > 0.0 {
                loss -= p[(r, c)].max(f64::MIN_POSITIVE).ln();
            }
        }
    }
    loss /= n;
    let mut g = a.t_matmul(&p.sub(y)?)?.scale(1.0 / n);
    for r in 0..d {
        for c in 0..theta.cols() {
            let t = theta[(r, c)];
            g[(r, c)] += LOGISTIC_L2 * t;
            loss += 0.5 * LOGISTIC_L2 * t * t;
        }
    }
    Ok((loss, g))
}

/// Nesterov-accelerated gradient descent from zero on the penalized
/// multinomial log-loss over standardized features.
pub(super) fn fit_logistic(x: &Matrix, targets: &ProbeTargets) -> Result<LogisticFit> {
    let y = targets.as_matrix();
    let (mean, scale) = standardizer(x);
    let d = x.cols();
    let a = with_bias(&standardize(x, &mean, &scale));
    let lipschitz = 0.5 * gram_spectral_bound(&a)? + LOGISTIC_L2;
    let step = 1.0 / lipschitz;
    let kappa = lipschitz / LOGISTIC_L2;
    let momentum = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);

    let mut theta = Matrix::zeros(d + 1, y.cols());
    let mut prev = theta.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < LOGISTIC_MAX_ITER {
        if iterations % CHECK_EVERY == 0 {
            let (_, g_at) = logistic_loss_grad(&a, &y, &theta, d)?;
            if g_at.frobenius_sq().sqrt() < LOGISTIC_TOL {
                converged = true;
                break;
            }
        }
        let mut look = theta.clone();
        look.add_assign_scaled(&theta.sub(&prev)?, momentum);
        let (_, g) = logistic_loss_grad(&a, &y, &look, d)?;
        prev = theta;
        look.add_assign_scaled(&g, -step);
        theta = look;
        iterations += 1;
    }
    let (objective, _) = logistic_loss_grad(&a, &y, &theta, d)?;

    // Fold the standardization into the weights.
    let w = Matrix::from_fn(d, y.cols(), |r, c| theta[(r, c)] / scale[r]);
    let b = Matrix::from_fn(1, y.cols(), |_, c| {
        theta[(d, c)] - (0..d).map(|r| mean[r] * w[(r, c)]).sum::<f64>()
    });
    Ok(LogisticFit {
        w,
        b,
        objective,
        iterations,
        converged,
    })
}
