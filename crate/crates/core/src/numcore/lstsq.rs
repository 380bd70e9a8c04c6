//! Ridge-regularized least squares by Householder QR.
//!
//! The ridge term is folded in by stacking `sqrt(ridge)·I` under the design
//! and zeros under the targets, so the same QR path serves both the plain and
//! the regularized problem.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Minimizes `‖design·W − targets‖² + ridge·‖W‖²` over `W` (`p × q`).
pub fn solve_least_squares(design: &Matrix, targets: &Matrix, ridge: f64) -> Result<Matrix> {
    let (n, p) = design.shape();
    let q = targets.cols();
    if n == 0 || p == 0 {
        return Err(Error::shape("least squares needs at least one row and column"));
    }
    if targets.rows() != n {
        return Err(Error::shape(format!(
            "design has {n} rows, targets {}",
            targets.rows()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::shape(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    if !design.is_finite() || !targets.is_finite() {
        return Err(Error::shape("non-finite least-squares input"));
    }

    let m = if ridge > 0.0 { n + p } else { n };
    if m < p {
        return Err(Error::DegenerateSystem);
    }
    // Column-major working copies: householder reflections sweep columns.
    let mut a = vec![0.0; m * p];
    let mut b = vec![0.0; m * q];
    for r in 0..n {
        for c in 0..p {
            a[c * m + r] = design[(r, c)];
        }
        for c in 0..q {
            b[c * m + r] = targets[(r, c)];
        }
    }
    if ridge > 0.0 {
        let s = ridge.sqrt();
        for c in 0..p {
            a[c * m + n + c] = s;
        }
    }

    let mut diag = vec![0.0; p];
    for k in 0..p {
        let col = &mut a[k * m..(k + 1) * m];
        let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = 0.0;
            continue;
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        col[k] -= alpha;
        let vnorm_sq: f64 = col[k..].iter().map(|v| v * v).sum();
        let v: Vec<f64> = col[k..].to_vec();
        diag[k] = alpha;
        if vnorm_sq == 0.0 {
            continue;
        }
        for j in (k + 1)..p {
            let cj = &mut a[j * m..(j + 1) * m];
            let proj = 2.0 * dot_tail(&v, &cj[k..]) / vnorm_sq;
            for (x, vi) in cj[k..].iter_mut().zip(&v) {
                *x -= proj * vi;
            }
        }
        for j in 0..q {
            let bj = &mut b[j * m..(j + 1) * m];
            let proj = 2.0 * dot_tail(&v, &bj[k..]) / vnorm_sq;
            for (x, vi) in bj[k..].iter_mut().zip(&v) {
                *x -= proj * vi;
            }
        }
    }

    let scale = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let tol = scale * (m.max(p) as f64) * f64::EPSILON * 16.0;
    if scale == 0.0 || diag.iter().any(|d| d.abs() <= tol) {
        return Err(Error::DegenerateSystem);
    }

    // Back substitution on R·W = Qᵀb; R's strict upper part lives in `a`.
    let mut w = Matrix::zeros(p, q);
    for j in 0..q {
        let bj = &b[j * m..(j + 1) * m];
        for k in (0..p).rev() {
            let mut s = bj[k];
            for c in (k + 1)..p {
                s -= a[c * m + k] * w[(c, j)];
            }
            w[(k, j)] = s / diag[k];
        }
    }
    Ok(w)
}

fn dot_tail(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::RngStream;

    #[test]
    fn identity_design() {
        let w = solve_least_squares(
            &Matrix::identity(2),
            &Matrix::column(&[1.0, 2.0]),
            0.0,
        )
        .unwrap();
        assert!((w[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((w[(1, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_two_by_two() {
        let design = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]);
        let w = solve_least_squares(&design, &Matrix::column(&[1.0, 3.0]), 0.0).unwrap();
        assert!((w[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((w[(1, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn noiseless_recovery_with_tiny_ridge() {
        let mut rng = RngStream::new(11, 0);
        let design = rng.normal_matrix(50, 3, 1.0);
        let truth = Matrix::column(&[1.0, -2.0, 0.5]);
        let targets = design.matmul(&truth).unwrap();
        let w = solve_least_squares(&design, &targets, 1e-9).unwrap();
        assert!(w.max_abs_diff(&truth) < 1e-6);
        let residual = design.matmul(&w).unwrap().sub(&targets).unwrap();
        assert!(residual.frobenius_sq().sqrt() < 1e-6);
    }

    #[test]
    fn rank_deficient_needs_ridge() {
        let design = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]);
        let targets = Matrix::column(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            solve_least_squares(&design, &targets, 0.0),
            Err(Error::DegenerateSystem)
        ));
        let w = solve_least_squares(&design, &targets, 1e-6).unwrap();
        assert!(w.is_finite());
    }

    #[test]
    fn ridge_matches_normal_equations() {
        // Closed form for one column: w = xᵀy / (xᵀx + ridge).
        let x = Matrix::column(&[1.0, 2.0, 3.0]);
        let y = Matrix::column(&[2.0, 1.0, 4.0]);
        let w = solve_least_squares(&x, &y, 2.0).unwrap();
        assert!((w[(0, 0)] - 16.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn residual_orthogonal_to_columns() {
        let mut rng = RngStream::new(5, 1);
        for _ in 0..20 {
            let design = rng.normal_matrix(30, 4, 1.0);
            let targets = rng.normal_matrix(30, 2, 1.0);
            let w = solve_least_squares(&design, &targets, 0.0).unwrap();
            let residual = targets.sub(&design.matmul(&w).unwrap()).unwrap();
            let gram = design.t_matmul(&residual).unwrap();
            assert!(gram.as_slice().iter().all(|v| v.abs() < 1e-8));
        }
    }
}
