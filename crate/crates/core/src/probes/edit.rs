//! Minimum-norm edits that move a representation to a chosen probe read-out.

use super::{CoordinateMap, Probe, ProbeOutput, ProbeParams, TaskMode};
use crate::error::{Error, Result};
use crate::numcore::{argmax, solve_least_squares, Matrix};

/// Logit lead the edited class must hold over every other class.
pub const LOGIT_MARGIN: f64 = 1.0;
/// Relative tolerance for hitting a real-valued target.
const VALUE_TOL: f64 = 1e-6;

/// The read-out an edit should produce.
#[derive(Clone, Debug, PartialEq)]
pub enum EditTarget {
    Label(usize),
    Value(Vec<f64>),
}

impl EditTarget {
    fn describe(&self) -> String {
        match self {
            Self::Label(m) => format!("class {m}"),
            Self::Value(v) => format!("value {v:?}"),
        }
    }
}

impl Probe {
    /// Moves every row of `z` so that the probe reads `target`, changing only
    /// the columns the probe reads.
    ///
    /// Linear regression probes take the minimum-norm shift. Linear
    /// classifiers take successive minimum-norm shifts across the decision
    /// boundary against the strongest competing class until `target` leads
    /// by [`LOGIT_MARGIN`]. Coordinate probes overwrite their coordinates.
    pub fn edit(&self, z: &Matrix, target: &EditTarget) -> Result<Matrix> {
        let unreachable = || Error::UnreachableTarget {
            target: target.describe(),
        };
        match (self.output, target) {
            (ProbeOutput::Labels(k), EditTarget::Label(m)) if *m < k => {}
            (ProbeOutput::Values(d), EditTarget::Value(v)) if v.len() == d => {}
            _ => return Err(unreachable()),
        }
        if z.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "probe expects width {}, got {}",
                self.input_dim,
                z.cols()
            )));
        }
        let (start, len) = self.window.unwrap_or((0, self.input_dim));
        let wanted: Vec<f64> = match target {
            EditTarget::Label(m) => crate::worlds::one_hot(*m, self.output.dim()),
            EditTarget::Value(v) => v.clone(),
        };
        let mut out = z.clone();
        match &self.params {
            ProbeParams::Linear { w, b } => match (self.class.mode, target) {
                (TaskMode::Classification, EditTarget::Label(m)) => {
                    for r in 0..out.rows() {
                        push_across(&mut out.row_mut(r)[start..start + len], w, b, *m)
                            .ok_or_else(unreachable)?;
                    }
                }
                _ => {
                    let pinv = min_norm_map(w)?;
                    let current = self.raw(z)?;
                    for r in 0..out.rows() {
                        let resid: Vec<f64> =
                            wanted.iter().zip(current.row(r)).map(|(t, c)| t - c).collect();
                        let row = &mut out.row_mut(r)[start..start + len];
                        for (c, rc) in resid.iter().enumerate() {
                            for (j, v) in row.iter_mut().enumerate() {
                                *v += rc * pinv[(c, j)];
                            }
                        }
                    }
                }
            },
            ProbeParams::Coordinate(map) => match map {
                CoordinateMap::Affine {
                    index,
                    slope,
                    intercept,
                } => {
                    for c in 0..index.len() {
                        if slope[c] == 0.0 {
                            if wanted[c] != intercept[c] {
                                return Err(unreachable());
                            }
                            continue;
                        }
                        let v = (wanted[c] - intercept[c]) / slope[c];
                        for r in 0..out.rows() {
                            out[(r, start + index[c])] = v;
                        }
                    }
                }
                CoordinateMap::Threshold {
                    index, class_means, ..
                }
                | CoordinateMap::NearestMean { index, class_means } => {
                    let EditTarget::Label(m) = target else {
                        return Err(unreachable());
                    };
                    let v = class_means[*m].ok_or_else(unreachable)?;
                    for r in 0..out.rows() {
                        out[(r, start + index)] = v;
                    }
                }
            },
            ProbeParams::Mlp { .. } => {
                return Err(Error::InvalidProbeSpec(
                    "MLP probes have no minimum-norm editor".into(),
                ))
            }
        }
        self.confirm(&out, target).map_err(|_| unreachable())?;
        Ok(out)
    }

    fn confirm(&self, z: &Matrix, target: &EditTarget) -> Result<()> {
        let ok = match target {
            EditTarget::Label(m) => self.labels(z)?.iter().all(|l| l == m),
            EditTarget::Value(v) => {
                let raw = self.raw(z)?;
                let scale = 1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max);
                (0..raw.rows()).all(|r| {
                    raw.row(r)
                        .iter()
                        .zip(v)
                        .all(|(a, b)| (a - b).abs() <= VALUE_TOL * scale)
                })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnreachableTarget {
                target: target.describe(),
            })
        }
    }
}

/// `(WᵀW)⁻¹Wᵀ` with a vanishing ridge: row `c` is the minimum-norm input
/// direction that raises output `c` by one and leaves the others fixed.
fn min_norm_map(w: &Matrix) -> Result<Matrix> {
    let gram = w.t_matmul(w)?;
    let k = gram.rows();
    let trace: f64 = (0..k).map(|i| gram[(i, i)]).sum();
    let ridge = 1e-12 * (trace / k.max(1) as f64).max(f64::MIN_POSITIVE);
    solve_least_squares(&gram, &w.transpose(), ridge)
}

fn push_across(row: &mut [f64], w: &Matrix, b: &Matrix, target: usize) -> Option<()> {
    let k = w.cols();
    let logits = |row: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|c| b[(0, c)] + row.iter().enumerate().map(|(j, v)| v * w[(j, c)]).sum::<f64>())
            .collect()
    };
    for _ in 0..4 * k {
        let l = logits(row);
        let mut rival = l.clone();
        rival[target] = f64::NEG_INFINITY;
        let j = argmax(&rival);
        let gap = l[j] - l[target] + LOGIT_MARGIN;
        if gap <= 0.0 {
            return Some(());
        }
        let dir: Vec<f64> = (0..row.len()).map(|r| w[(r, target)] - w[(r, j)]).collect();
        let norm_sq: f64 = dir.iter().map(|d| d * d).sum();
        if norm_sq == 0.0 {
            return None;
        }
        for (v, d) in row.iter_mut().zip(&dir) {
            *v += gap * d / norm_sq;
        }
    }
    let l = logits(row);
    (argmax(&l) == target).then_some(())
}
