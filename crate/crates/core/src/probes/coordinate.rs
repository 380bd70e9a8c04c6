//! Projections onto single coordinates.
//!
//! Regression reads each output column from one coordinate through the best
//! affine rescaling. Binary classification thresholds one coordinate;
//! multiclass classification assigns the class whose mean on the chosen
//! coordinate is nearest. Every coordinate is tried, so the fit is exact:
//! ties go to the lowest index.

use serde::{Deserialize, Serialize};

use super::{Diagnostics, Metric, Probe, ProbeOutput, ProbeParams, ProbeTargets, TaskMode, FunctionClass};
use crate::numcore::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CoordinateMap {
    /// Output column `c` is `slope[c]·z[index[c]] + intercept[c]`.
    Affine {
        index: Vec<usize>,
        slope: Vec<f64>,
        intercept: Vec<f64>,
    },
    /// Class 1 iff `(z[index] > threshold) == above`.
    Threshold {
        index: usize,
        threshold: f64,
        above: bool,
        class_means: Vec<Option<f64>>,
    },
    /// The class whose training mean of `z[index]` is nearest.
    NearestMean {
        index: usize,
        class_means: Vec<Option<f64>>,
    },
}

impl CoordinateMap {
    pub fn indices(&self) -> Vec<usize> {
        match self {
            Self::Affine { index, .. } => index.clone(),
            Self::Threshold { index, .. } | Self::NearestMean { index, .. } => vec![*index],
        }
    }

    pub(super) fn raw(&self, z: &Matrix, out_dim: usize) -> Matrix {
        match self {
            Self::Affine {
                index,
                slope,
                intercept,
            } => Matrix::from_fn(z.rows(), index.len(), |r, c| {
                slope[c] * z[(r, index[c])] + intercept[c]
            }),
            _ => {
                let labels = self.labels(z).expect("classifier map");
                let mut m = Matrix::zeros(z.rows(), out_dim);
                for (r, l) in labels.into_iter().enumerate() {
                    m[(r, l)] = 1.0;
                }
                m
            }
        }
    }

    /// Class per row for classifier maps; `None` for affine maps.
    pub(super) fn labels(&self, z: &Matrix) -> Option<Vec<usize>> {
        match self {
            Self::Affine { .. } => None,
            Self::Threshold {
                index,
                threshold,
                above,
                ..
            } => Some(
                (0..z.rows())
                    .map(|r| usize::from((z[(r, *index)] > *threshold) == *above))
                    .collect(),
            ),
            Self::NearestMean { index, class_means } => Some(
                (0..z.rows())
                    .map(|r| nearest_class(z[(r, *index)], class_means))
                    .collect(),
            ),
        }
    }
}

fn nearest_class(v: f64, means: &[Option<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, m) in means.iter().enumerate() {
        if let Some(m) = m {
            let d = (v - m).abs();
            if d < best.1 {
                best = (c, d);
            }
        }
    }
    best.0
}

fn class_means(x: &[f64], labels: &[usize], classes: usize) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; classes];
    let mut count = vec![0usize; classes];
    for (&v, &l) in x.iter().zip(labels) {
        sum[l] += v;
        count[l] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Best affine fit of `y` on `x`: `(slope, intercept, mean squared error)`.
fn affine_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let (slope, intercept) = if sxx > 0.0 {
        let s = sxy / sxx;
        (s, my - s * mx)
    } else {
        (0.0, my)
    };
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    (slope, intercept, sse / n)
}

/// Optimal threshold rule on `x`: `(threshold, above, error rate)`.
fn threshold_fit(x: &[f64], labels: &[usize]) -> (f64, bool, f64) {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let positives = labels.iter().filter(|&&l| l == 1).count();
    // Threshold below every value: all rows are "above".
    let mut ones_at_or_below = 0usize;
    let mut zeros_at_or_below = 0usize;
    let errors = |ones_below: usize, zeros_below: usize, above: bool| {
        let zeros_above = (n - positives) - zeros_below;
        if above {
            ones_below + zeros_above
        } else {
            zeros_below + (positives - ones_below)
        }
    };
    let mut best = (f64::NEG_INFINITY, true, errors(0, 0, true));
    let alt = errors(0, 0, false);
    if alt < best.2 {
        best = (f64::NEG_INFINITY, false, alt);
    }
    let mut i = 0;
    while i < n {
        let v = x[order[i]];
        while i < n && x[order[i]] == v {
            if labels[order[i]] == 1 {
                ones_at_or_below += 1;
            } else {
                zeros_at_or_below += 1;
            }
            i += 1;
        }
        if i == n {
            break;
        }
        let t = 0.5 * (v + x[order[i]]);
        for above in [true, false] {
            let e = errors(ones_at_or_below, zeros_at_or_below, above);
            if e < best.2 {
                best = (t, above, e);
            }
        }
    }
    (best.0, best.1, best.2 as f64 / n as f64)
}

fn nearest_mean_fit(x: &[f64], labels: &[usize], classes: usize) -> (Vec<Option<f64>>, f64) {
    let means = class_means(x, labels, classes);
    let errors = x
        .iter()
        .zip(labels)
        .filter(|(&v, &l)| nearest_class(v, &means) != l)
        .count();
    (means, errors as f64 / x.len() as f64)
}

/// Training objective of every coordinate, indexed `[coordinate][column]`.
///
/// Regression reports the mean squared error of each output column;
/// classification reports a single error rate.
pub fn coordinate_objectives(inputs: &Matrix, targets: &ProbeTargets, mode: TaskMode) -> Vec<Vec<f64>> {
    let y = targets.as_matrix();
    (0..inputs.cols())
        .map(|i| {
            let x = inputs.col(i);
            match (mode, targets) {
                (TaskMode::Classification, ProbeTargets::Labels { labels, classes }) => {
                    if *classes == 2 {
                        vec![threshold_fit(&x, labels).2]
                    } else {
                        vec![nearest_mean_fit(&x, labels, *classes).1]
                    }
                }
                _ => (0..y.cols()).map(|c| affine_fit(&x, &y.col(c)).2).collect(),
            }
        })
        .collect()
}

/// Fits the map and returns it with its training objective.
pub(super) fn fit(x: &Matrix, targets: &ProbeTargets, mode: TaskMode) -> (CoordinateMap, f64) {
    let cols: Vec<Vec<f64>> = (0..x.cols()).map(|i| x.col(i)).collect();
    match (mode, targets) {
        (TaskMode::Classification, ProbeTargets::Labels { labels, classes }) => {
            let mut best: Option<(usize, f64)> = None;
            let objectives = coordinate_objectives(x, targets, mode);
            for (i, o) in objectives.iter().enumerate() {
                if best.is_none_or(|(_, b)| o[0] < b) {
                    best = Some((i, o[0]));
                }
            }
            let (index, objective) = best.expect("at least one coordinate");
            let map = if *classes == 2 {
                let (threshold, above, _) = threshold_fit(&cols[index], labels);
                CoordinateMap::Threshold {
                    index,
                    threshold,
                    above,
                    class_means: class_means(&cols[index], labels, 2),
                }
            } else {
                CoordinateMap::NearestMean {
                    index,
                    class_means: nearest_mean_fit(&cols[index], labels, *classes).0,
                }
            };
            (map, objective)
        }
        _ => {
            let y = targets.as_matrix();
            let (mut index, mut slope, mut intercept) = (vec![], vec![], vec![]);
            let mut total = 0.0;
            for c in 0..y.cols() {
                let yc = y.col(c);
                let mut best: Option<(usize, f64, f64, f64)> = None;
                for (i, xi) in cols.iter().enumerate() {
                    let (a, b, mse) = affine_fit(xi, &yc);
                    if best.is_none_or(|(.., m)| mse < m) {
                        best = Some((i, a, b, mse));
                    }
                }
                let (i, a, b, mse) = best.expect("at least one coordinate");
                index.push(i);
                slope.push(a);
                intercept.push(b);
                total += mse;
            }
            (
                CoordinateMap::Affine {
                    index,
                    slope,
                    intercept,
                },
                total,
            )
        }
    }
}

/// Brute-force oracle over every coordinate, fitted on all rows.
///
/// Labels use the threshold or nearest-mean rule; values use affine fits.
pub fn fit_coordinate_probe_exhaustive(inputs: &Matrix, targets: &ProbeTargets) -> Probe {
    let mode = match targets {
        ProbeTargets::Labels { .. } => TaskMode::Classification,
        ProbeTargets::Values(_) => TaskMode::Regression,
    };
    let (map, objective) = fit(inputs, targets, mode);
    let output = targets.output();
    let mut probe = Probe {
        class: FunctionClass::coordinate(mode),
        input_dim: inputs.cols(),
        window: None,
        output,
        params: ProbeParams::Coordinate(map),
        diagnostics: Diagnostics {
            metric: match output {
                ProbeOutput::Labels(_) => Metric::Accuracy,
                ProbeOutput::Values(_) => Metric::R2,
            },
            train_score: 0.0,
            heldout_score: 0.0,
            train_error: 0.0,
            heldout_error: 0.0,
            n_train: inputs.rows(),
            n_heldout: 0,
            objective,
            iterations: 1,
            converged: true,
        },
    };
    let (s, e) = probe.evaluate(inputs, targets).expect("shapes agree");
    let d = &mut probe.diagnostics;
    d.train_score = s;
    d.heldout_score = s;
    d.train_error = e;
    d.heldout_error = e;
    probe
}
