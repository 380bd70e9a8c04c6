//! Central-difference gradient estimates.

use super::matrix::Matrix;

/// Central-difference estimate of `∂loss/∂θ` for every entry of every
/// parameter matrix. Non-finite loss values propagate into the estimate.
pub fn finite_diff<F>(loss: F, at: &[Matrix], step: f64) -> Vec<Matrix>
where
    F: Fn(&[Matrix]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut point: Vec<Matrix> = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for p in 0..at.len() {
        let mut g = Matrix::zeros(at[p].rows(), at[p].cols());
        for i in 0..at[p].len() {
            let orig = at[p].as_slice()[i];
            point[p].as_mut_slice()[i] = orig + step;
            let up = loss(&point);
            point[p].as_mut_slice()[i] = orig - step;
            let down = loss(&point);
            point[p].as_mut_slice()[i] = orig;
            g.as_mut_slice()[i] = (up - down) / (2.0 * step);
        }
        out.push(g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square() {
        let g = finite_diff(|p| p[0][(0, 0)].powi(2), &[Matrix::filled(1, 1, 3.0)], 1e-3);
        assert!((g[0][(0, 0)] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let g = finite_diff(|_| 4.2, &[Matrix::filled(2, 2, 1.0)], 1e-3);
        assert!(g[0].as_slice().iter().all(|&v| v == 0.0));
    }
}
