//! Restricted function classes and the probes fitted from them.
//!
//! A probe reads a model value out of a representation. Probes are fitted on
//! an 80/20 train/heldout split drawn from the fit seed; the heldout score
//! (accuracy for categorical targets, R² for real-valued ones) is what the
//! criteria compare against thresholds.

mod control;
mod coordinate;
mod edit;
mod linear;
mod mlp;
mod store;

use serde::{Deserialize, Serialize};

pub use control::{control_function_test, ControlFunction, ControlRecord};
pub use coordinate::{coordinate_objectives, fit_coordinate_probe_exhaustive, CoordinateMap};
pub use edit::{EditTarget, LOGIT_MARGIN};

use crate::error::{Error, Result};
use crate::numcore::rng::streams;
use crate::numcore::{Matrix, RngStream};

/// Fewest rows a probe may be fitted on.
pub const MIN_ROWS: usize = 20;
/// Fraction of rows held out from fitting.
pub const HELDOUT_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassKind {
    Linear,
    /// One input coordinate per output, plus a sign/threshold or affine
    /// rescaling.
    Coordinate,
    /// One `tanh` hidden layer of at most `hidden` units.
    MlpBounded { hidden: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    Regression,
    Classification,
}

/// Serialized flat: `{"kind": "mlp_bounded", "hidden": 8, "mode": "classification"}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ClassRepr", into = "ClassRepr")]
pub struct FunctionClass {
    pub kind: ClassKind,
    pub mode: TaskMode,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindName {
    Linear,
    Coordinate,
    MlpBounded,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassRepr {
    kind: KindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    mode: TaskMode,
}

impl TryFrom<ClassRepr> for FunctionClass {
    type Error = String;

    fn try_from(r: ClassRepr) -> std::result::Result<Self, String> {
        let kind = match (r.kind, r.hidden) {
            (KindName::Linear, None) => ClassKind::Linear,
            (KindName::Coordinate, None) => ClassKind::Coordinate,
            (KindName::MlpBounded, Some(hidden)) => ClassKind::MlpBounded { hidden },
            (KindName::MlpBounded, None) => return Err("mlp_bounded needs `hidden`".into()),
            (_, Some(_)) => return Err("`hidden` only applies to mlp_bounded".into()),
        };
        Ok(Self { kind, mode: r.mode })
    }
}

impl From<FunctionClass> for ClassRepr {
    fn from(c: FunctionClass) -> Self {
        let (kind, hidden) = match c.kind {
            ClassKind::Linear => (KindName::Linear, None),
            ClassKind::Coordinate => (KindName::Coordinate, None),
            ClassKind::MlpBounded { hidden } => (KindName::MlpBounded, Some(hidden)),
        };
        Self { kind, hidden, mode: c.mode }
    }
}

impl FunctionClass {
    pub const fn linear(mode: TaskMode) -> Self {
        Self {
            kind: ClassKind::Linear,
            mode,
        }
    }

    pub const fn coordinate(mode: TaskMode) -> Self {
        Self {
            kind: ClassKind::Coordinate,
            mode,
        }
    }

    pub const fn mlp(hidden: usize, mode: TaskMode) -> Self {
        Self {
            kind: ClassKind::MlpBounded { hidden },
            mode,
        }
    }

    pub fn name(&self) -> String {
        let kind = match self.kind {
            ClassKind::Linear => "linear".to_string(),
            ClassKind::Coordinate => "coordinate".to_string(),
            ClassKind::MlpBounded { hidden } => format!("mlp(h<={hidden})"),
        };
        let mode = match self.mode {
            TaskMode::Regression => "regression",
            TaskMode::Classification => "classification",
        };
        format!("{kind}/{mode}")
    }

    pub fn validate(&self) -> Result<()> {
        if let ClassKind::MlpBounded { hidden: 0 } = self.kind {
            return Err(Error::InvalidProbeSpec("MLP probe needs at least one hidden unit".into()));
        }
        Ok(())
    }
}

/// What a probe is fitted to reproduce.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbeTargets {
    Labels { labels: Vec<usize>, classes: usize },
    Values(Matrix),
}

impl ProbeTargets {
    pub fn labels(labels: Vec<usize>, classes: usize) -> Self {
        Self::Labels { labels, classes }
    }

    pub fn rows(&self) -> usize {
        match self {
            Self::Labels { labels, .. } => labels.len(),
            Self::Values(m) => m.rows(),
        }
    }

    pub fn output(&self) -> ProbeOutput {
        match self {
            Self::Labels { classes, .. } => ProbeOutput::Labels(*classes),
            Self::Values(m) => ProbeOutput::Values(m.cols()),
        }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            Self::Labels { labels, classes } => Self::Labels {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Self::Values(m) => Self::Values(m.select_rows(idx)),
        }
    }

    /// The regression matrix: one-hot rows for labels.
    pub fn as_matrix(&self) -> Matrix {
        match self {
            Self::Labels { labels, classes } => {
                let mut m = Matrix::zeros(labels.len(), *classes);
                for (r, &l) in labels.iter().enumerate() {
                    m[(r, l)] = 1.0;
                }
                m
            }
            Self::Values(m) => m.clone(),
        }
    }

    pub fn label_slice(&self) -> Option<&[usize]> {
        match self {
            Self::Labels { labels, .. } => Some(labels),
            Self::Values(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum ProbeOutput {
    /// Categorical model with this many classes.
    Labels(usize),
    /// Real-valued model of this dimension.
    Values(usize),
}

impl ProbeOutput {
    pub fn dim(self) -> usize {
        match self {
            Self::Labels(n) | Self::Values(n) => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    R2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub metric: Metric,
    pub train_score: f64,
    pub heldout_score: f64,
    /// `1 − score` for accuracy, mean squared error for R².
    pub train_error: f64,
    pub heldout_error: f64,
    pub n_train: usize,
    pub n_heldout: usize,
    /// Value of the fitting objective on the training rows.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeParams {
    /// `z·w + b`: predictions for regression, logits for classification.
    Linear { w: Matrix, b: Matrix },
    Coordinate(CoordinateMap),
    /// `tanh(((z − mean) / scale)·w1 + b1)·w2 + b2`.
    Mlp {
        mean: Vec<f64>,
        scale: Vec<f64>,
        w1: Matrix,
        b1: Matrix,
        w2: Matrix,
        b2: Matrix,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub class: FunctionClass,
    /// Width of the representation the probe is applied to.
    pub input_dim: usize,
    /// `(start, len)` of the columns the probe reads; `None` reads all.
    pub window: Option<(usize, usize)>,
    pub output: ProbeOutput,
    pub params: ProbeParams,
    pub diagnostics: Diagnostics,
}

/// Deterministic 80/20 split of `0..n`, each part in ascending order.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm = RngStream::new(seed, streams::PROBE_SPLIT).permutation(n);
    let n_held = ((n as f64) * HELDOUT_FRACTION).floor().max(1.0) as usize;
    let mut held = perm.split_off(n - n_held);
    perm.sort_unstable();
    held.sort_unstable();
    (perm, held)
}

/// Fits a probe of `class` reading all columns of `inputs`.
pub fn fit_probe(class: FunctionClass, inputs: &Matrix, targets: &ProbeTargets, seed: u64) -> Result<Probe> {
    fit_probe_windowed(class, inputs, None, targets, seed)
}

/// Fits a probe that reads only the columns `window` of `inputs`.
pub fn fit_probe_windowed(
    class: FunctionClass,
    inputs: &Matrix,
    window: Option<(usize, usize)>,
    targets: &ProbeTargets,
    seed: u64,
) -> Result<Probe> {
    class.validate()?;
    let n = inputs.rows();
    if targets.rows() != n {
        return Err(Error::shape(format!("{} input rows but {} targets", n, targets.rows())));
    }
    if n < MIN_ROWS {
        return Err(Error::InvalidProbeSpec(format!(
            "probe fitting needs at least {MIN_ROWS} rows, got {n}"
        )));
    }
    if class.mode == TaskMode::Classification && matches!(targets, ProbeTargets::Values(_)) {
        return Err(Error::InvalidProbeSpec(format!(
            "{} cannot be fitted to real-valued targets",
            class.name()
        )));
    }
    if let Some((start, len)) = window {
        if len == 0 || start + len > inputs.cols() {
            return Err(Error::InvalidProbeSpec(format!(
                "window {start}+{len} outside width {}",
                inputs.cols()
            )));
        }
    }
    let view = apply_window(inputs, window);
    let (train_idx, held_idx) = split_indices(n, seed);
    let x_train = view.select_rows(&train_idx);
    let t_train = targets.select(&train_idx);

    let mut rng = RngStream::new(seed, streams::PROBE_FIT);
    let (params, objective, iterations, converged) = match class.kind {
        ClassKind::Linear => match class.mode {
            TaskMode::Regression => {
                let (w, b, obj) = linear::fit_regression(&x_train, &t_train.as_matrix())?;
                (ProbeParams::Linear { w, b }, obj, 1, true)
            }
            TaskMode::Classification => {
                let fit = linear::fit_logistic(&x_train, &t_train)?;
                (
                    ProbeParams::Linear { w: fit.w, b: fit.b },
                    fit.objective,
                    fit.iterations,
                    fit.converged,
                )
            }
        },
        ClassKind::Coordinate => {
            let (map, obj) = coordinate::fit(&x_train, &t_train, class.mode);
            (ProbeParams::Coordinate(map), obj, 1, true)
        }
        ClassKind::MlpBounded { hidden } => {
            let (params, obj) = mlp::fit(&x_train, &t_train, class.mode, hidden, &mut rng)?;
            (params, obj, mlp::EPOCHS, true)
        }
    };

    let mut probe = Probe {
        class,
        input_dim: inputs.cols(),
        window,
        output: targets.output(),
        params,
        diagnostics: Diagnostics {
            metric: metric_for(targets),
            train_score: 0.0,
            heldout_score: 0.0,
            train_error: 0.0,
            heldout_error: 0.0,
            n_train: train_idx.len(),
            n_heldout: held_idx.len(),
            objective,
            iterations,
            converged,
        },
    };
    let (ts, te) = probe.evaluate(&inputs.select_rows(&train_idx), &t_train)?;
    let (hs, he) = probe.evaluate(&inputs.select_rows(&held_idx), &targets.select(&held_idx))?;
    probe.diagnostics.train_score = ts;
    probe.diagnostics.train_error = te;
    probe.diagnostics.heldout_score = hs;
    probe.diagnostics.heldout_error = he;
    Ok(probe)
}

fn metric_for(targets: &ProbeTargets) -> Metric {
    match targets {
        ProbeTargets::Labels { .. } => Metric::Accuracy,
        ProbeTargets::Values(_) => Metric::R2,
    }
}

fn apply_window(z: &Matrix, window: Option<(usize, usize)>) -> Matrix {
    match window {
        Some((start, len)) => z.select_cols(start, len),
        None => z.clone(),
    }
}

impl Probe {
    pub fn heldout_score(&self) -> f64 {
        self.diagnostics.heldout_score
    }

    /// Width of the columns the probe actually reads.
    pub fn read_dim(&self) -> usize {
        self.window.map_or(self.input_dim, |(_, len)| len)
    }

    fn check_input(&self, z: &Matrix) -> Result<()> {
        if z.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "probe expects width {}, got {}",
                self.input_dim,
                z.cols()
            )));
        }
        Ok(())
    }

    /// Raw read-out: predictions, logits or class scores per row.
    pub fn raw(&self, z: &Matrix) -> Result<Matrix> {
        self.check_input(z)?;
        let v = apply_window(z, self.window);
        match &self.params {
            ProbeParams::Linear { w, b } => v.matmul(w)?.add_row_broadcast(b),
            ProbeParams::Coordinate(map) => Ok(map.raw(&v, self.output.dim())),
            ProbeParams::Mlp {
                mean,
                scale,
                w1,
                b1,
                w2,
                b2,
            } => mlp::forward(&v, mean, scale, w1, b1, w2, b2),
        }
    }

    /// Predicted class per row, for categorical probes.
    pub fn labels(&self, z: &Matrix) -> Result<Vec<usize>> {
        if !matches!(self.output, ProbeOutput::Labels(_)) {
            return Err(Error::InvalidProbeSpec("probe output is real-valued".into()));
        }
        self.check_input(z)?;
        if let ProbeParams::Coordinate(map) = &self.params {
            if let Some(labels) = map.labels(&apply_window(z, self.window)) {
                return Ok(labels);
            }
        }
        let raw = self.raw(z)?;
        Ok((0..raw.rows()).map(|r| raw.argmax_row(r)).collect())
    }

    /// `g(z)` as targets of the same shape the probe was fitted on.
    pub fn predict(&self, z: &Matrix) -> Result<ProbeTargets> {
        match self.output {
            ProbeOutput::Labels(classes) => Ok(ProbeTargets::Labels {
                labels: self.labels(z)?,
                classes,
            }),
            ProbeOutput::Values(_) => Ok(ProbeTargets::Values(self.raw(z)?)),
        }
    }

    /// `(score, error)` of the probe against `targets`.
    pub fn evaluate(&self, z: &Matrix, targets: &ProbeTargets) -> Result<(f64, f64)> {
        score(&self.predict(z)?, targets)
    }
}

/// `(score, error)` of predictions against targets of the same kind.
pub fn score(pred: &ProbeTargets, truth: &ProbeTargets) -> Result<(f64, f64)> {
    match (pred, truth) {
        (ProbeTargets::Labels { labels: p, .. }, ProbeTargets::Labels { labels: t, .. }) => {
            if p.len() != t.len() {
                return Err(Error::shape("label count mismatch"));
            }
            if t.is_empty() {
                return Ok((0.0, 1.0));
            }
            let acc = p.iter().zip(t).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
            Ok((acc, 1.0 - acc))
        }
        (ProbeTargets::Values(p), ProbeTargets::Values(t)) => {
            let (r2, mse) = r_squared(p, t)?;
            Ok((r2, mse))
        }
        _ => Err(Error::InvalidProbeSpec("prediction and target kinds differ".into())),
    }
}

/// Pooled `R²` over all columns and the mean squared error per row.
pub fn r_squared(pred: &Matrix, truth: &Matrix) -> Result<(f64, f64)> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape("R² operands differ in shape"));
    }
    let n = truth.rows();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let sse = pred.sub(truth)?.frobenius_sq();
    let means = truth.col_means();
    let sst: f64 = (0..n)
        .map(|r| {
            truth
                .row(r)
                .iter()
                .zip(&means)
                .map(|(v, m)| (v - m).powi(2))
                .sum::<f64>()
        })
        .sum();
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok((r2, sse / n as f64))
}

/// Expected heldout accuracy of a predictor that ignores its input: the
/// overlap of the train and heldout label frequencies.
pub fn chance_accuracy(labels: &[usize], classes: usize, seed: u64) -> f64 {
    let (train, held) = split_indices(labels.len(), seed);
    let freq = |idx: &[usize]| {
        let mut f = vec![0.0; classes];
        for &i in idx {
            f[labels[i]] += 1.0 / idx.len() as f64;
        }
        f
    };
    let (p, q) = (freq(&train), freq(&held));
    p.iter().zip(&q).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests;
