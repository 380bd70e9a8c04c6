use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{solve_least_squares, Matrix};
use crate::probes::ProbeTargets;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi2Kind {
    /// A table on finite `M`, a linear map otherwise.
    #[default]
    Auto,
    Table,
    Linear,
}

/// The map `φ₂` from model values to output vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phi2 {
    /// Row `m` is the mean output over inputs the probe reads as `m`;
    /// `None` where the probe never produced `m`.
    Table { rows: Vec<Option<Vec<f64>>> },
    /// `v·w + b` on real-valued model values.
    Linear { w: Matrix, b: Matrix },
}

impl Phi2 {
    /// Fits `φ₂` so that `φ₂(m_i) ≈ out_i`.
    pub fn fit(kind: Phi2Kind, m: &ProbeTargets, out: &Matrix) -> Result<Self> {
        if m.rows() != out.rows() {
            return Err(Error::shape("φ₂ needs one output row per model value"));
        }
        match (kind, m) {
            (Phi2Kind::Auto | Phi2Kind::Table, ProbeTargets::Labels { labels, classes }) => {
                let mut sums = vec![vec![0.0; out.cols()]; *classes];
                let mut counts = vec![0usize; *classes];
                for (r, &l) in labels.iter().enumerate() {
                    counts[l] += 1;
                    for (s, v) in sums[l].iter_mut().zip(out.row(r)) {
                        *s += v;
                    }
                }
                let rows = sums
                    .into_iter()
                    .zip(counts)
                    .map(|(s, c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
                    .collect();
                Ok(Self::Table { rows })
            }
            (Phi2Kind::Table, ProbeTargets::Values(_)) => Err(Error::InvalidSpec(
                "a lookup-table φ₂ needs a finite model space".into(),
            )),
            (_, m) => {
                let x = m.as_matrix();
                let design = Matrix::from_fn(x.rows(), x.cols() + 1, |r, c| {
                    if c < x.cols() {
                        x[(r, c)]
                    } else {
                        1.0
                    }
                });
                let coef = solve_least_squares(&design, out, 1e-8)?;
                let d = x.cols();
                Ok(Self::Linear {
                    w: Matrix::from_fn(d, out.cols(), |r, c| coef[(r, c)]),
                    b: Matrix::from_fn(1, out.cols(), |_, c| coef[(d, c)]),
                })
            }
        }
    }

    /// `φ₂(m)` for each model value; `None` where the table has no entry.
    pub fn apply(&self, m: &ProbeTargets) -> Result<Vec<Option<Vec<f64>>>> {
        match (self, m) {
            (Self::Table { rows }, ProbeTargets::Labels { labels, .. }) => {
                Ok(labels.iter().map(|&l| rows.get(l).cloned().flatten()).collect())
            }
            (Self::Linear { w, b }, m) => {
                let out = m.as_matrix().matmul(w)?.add_row_broadcast(b)?;
                Ok((0..out.rows()).map(|r| Some(out.row(r).to_vec())).collect())
            }
            _ => Err(Error::InvalidSpec("φ₂ table applied to real-valued model values".into())),
        }
    }

    pub fn apply_label(&self, m: usize) -> Option<Vec<f64>> {
        match self {
            Self::Table { rows } => rows.get(m).cloned().flatten(),
            Self::Linear { w, b } => {
                let x = Matrix::row_vector(&crate::worlds::one_hot(m, w.rows()));
                x.matmul(w).ok()?.add_row_broadcast(b).ok().map(|o| o.row(0).to_vec())
            }
        }
    }

    pub fn apply_value(&self, v: &[f64]) -> Option<Vec<f64>> {
        match self {
            Self::Table { .. } => None,
            Self::Linear { w, b } => {
                let x = Matrix::row_vector(v);
                x.matmul(w).ok()?.add_row_broadcast(b).ok().map(|o| o.row(0).to_vec())
            }
        }
    }
}
