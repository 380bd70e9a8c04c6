//! Delay-embedded observations of a discrete dynamical system.
//!
//! A world point is a state `s` on an orbit. Its input is the window
//! `(α(s), α(F s), …, α(F^{k−1} s))`, the target is the next observation
//! `α(F^k s)` and the modeling function `state` is `F^{k−1} s`, the system
//! state at the end of the window.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ModelKind, TargetKind, WorldPoint};
use crate::error::{Error, Result};
use crate::numcore::RngStream;

pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A caller-supplied map `F: ℝⁿ → ℝⁿ` with its initial-state box.
#[derive(Clone)]
pub struct CustomMap {
    pub name: String,
    pub dim: usize,
    pub map: MapFn,
    pub init_range: (f64, f64),
    pub burn_in: usize,
}

impl fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMap")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomMap {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.dim == other.dim && Arc::ptr_eq(&self.map, &other.map)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicalSystem {
    /// Rotation of the plane by `theta` radians.
    Rotation { theta: f64 },
    /// Two logistic maps with asymmetric cross-coupling:
    /// `x' = x(rx − rx·x − bxy·y)`, `y' = y(ry − ry·y − byx·x)`.
    CoupledLogistic { rx: f64, ry: f64, bxy: f64, byx: f64 },
    #[serde(skip)]
    Custom(CustomMap),
}

impl DynamicalSystem {
    pub fn default_logistic() -> Self {
        DynamicalSystem::CoupledLogistic {
            rx: 3.8,
            ry: 3.5,
            bxy: 0.02,
            byx: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DynamicalSystem::Rotation { .. } | DynamicalSystem::CoupledLogistic { .. } => 2,
            DynamicalSystem::Custom(c) => c.dim,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, DynamicalSystem::Rotation { .. })
    }

    pub fn step(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DynamicalSystem::Rotation { theta } => {
                let (s, c) = theta.sin_cos();
                vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
            }
            DynamicalSystem::CoupledLogistic { rx, ry, bxy, byx } => vec![
                x[0] * (rx - rx * x[0] - bxy * x[1]),
                x[1] * (ry - ry * x[1] - byx * x[0]),
            ],
            DynamicalSystem::Custom(c) => (c.map)(x),
        }
    }

    fn init_range(&self) -> (f64, f64) {
        match self {
            DynamicalSystem::Rotation { .. } => (-1.0, 1.0),
            DynamicalSystem::CoupledLogistic { .. } => (0.2, 0.8),
            DynamicalSystem::Custom(c) => c.init_range,
        }
    }

    /// Upper bound (exclusive) on the random number of burn-in iterations.
    fn burn_in(&self) -> usize {
        match self {
            DynamicalSystem::Rotation { .. } => 1,
            DynamicalSystem::CoupledLogistic { .. } => 64,
            DynamicalSystem::Custom(c) => c.burn_in.max(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observation {
    Coordinate { index: usize },
    Linear { weights: Vec<f64> },
}

impl Observation {
    /// A fixed random unit-norm linear functional on `ℝ^dim`.
    pub fn random_linear(dim: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, 0);
        let mut w: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        w.iter_mut().for_each(|v| *v /= norm);
        Observation::Linear { weights: w }
    }

    pub fn observe(&self, x: &[f64]) -> f64 {
        match self {
            Observation::Coordinate { index } => x[*index],
            Observation::Linear { weights } => weights.iter().zip(x).map(|(w, v)| w * v).sum(),
        }
    }

    /// Row vector `c` with `α(x) = c·x`.
    pub fn as_functional(&self, dim: usize) -> Vec<f64> {
        match self {
            Observation::Coordinate { index } => {
                let mut c = vec![0.0; dim];
                c[*index] = 1.0;
                c
            }
            Observation::Linear { weights } => weights.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TakensWorld {
    system: DynamicalSystem,
    observation: Observation,
    window: usize,
}

pub(super) const MODEL_FNS: &[&str] = &["state"];
pub(super) const RESTRICTIONS: &[&str] = &["always"];

impl TakensWorld {
    /// Fails with `WindowTooShort` when `window < 2n + 1` unless
    /// `allow_short_window` is set.
    pub fn new(
        system: DynamicalSystem,
        observation: Observation,
        window: usize,
        allow_short_window: bool,
    ) -> Result<Self> {
        let n = system.dim();
        if n == 0 {
            return Err(Error::InvalidWorldParam("system dimension is zero".into()));
        }
        match &observation {
            Observation::Coordinate { index } if *index >= n => {
                return Err(Error::InvalidWorldParam(format!(
                    "observation coordinate {index} out of range for dimension {n}"
                )))
            }
            Observation::Linear { weights } if weights.len() != n => {
                return Err(Error::InvalidWorldParam(format!(
                    "observation functional has {} weights for dimension {n}",
                    weights.len()
                )))
            }
            _ => {}
        }
        if window == 0 {
            return Err(Error::InvalidWorldParam("window must be positive".into()));
        }
        let required = 2 * n + 1;
        if window < required && !allow_short_window {
            return Err(Error::WindowTooShort { window, required });
        }
        Ok(Self {
            system,
            observation,
            window,
        })
    }

    pub fn system(&self) -> &DynamicalSystem {
        &self.system
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub(super) fn input_dim(&self) -> usize {
        self.window
    }

    pub(super) fn target_kind(&self) -> TargetKind {
        TargetKind::Values(1)
    }

    pub(super) fn sample(&self, rng: &mut RngStream) -> WorldPoint {
        let (lo, hi) = self.system.init_range();
        let mut x: Vec<f64> = (0..self.system.dim()).map(|_| rng.uniform_in(lo, hi)).collect();
        let steps = rng.below(self.system.burn_in());
        for _ in 0..steps {
            x = self.system.step(&x);
        }
        WorldPoint::Orbit {
            state: x,
            index: steps,
        }
    }

    fn state(point: &WorldPoint) -> &[f64] {
        match point {
            WorldPoint::Orbit { state, .. } => state,
            other => panic!("takens world given {other:?}"),
        }
    }

    pub(super) fn is_valid(&self, point: &WorldPoint) -> bool {
        matches!(point, WorldPoint::Orbit { state, .. }
            if state.len() == self.system.dim() && state.iter().all(|v| v.is_finite()))
    }

    /// The `window + 1` observations starting at the point.
    fn observations(&self, point: &WorldPoint) -> (Vec<f64>, Vec<f64>) {
        let mut x = Self::state(point).to_vec();
        let mut obs = Vec::with_capacity(self.window + 1);
        let mut last_state = x.clone();
        for j in 0..=self.window {
            obs.push(self.observation.observe(&x));
            if j + 1 == self.window {
                last_state = x.clone();
            }
            if j < self.window {
                x = self.system.step(&x);
            }
        }
        (obs, last_state)
    }

    pub(super) fn alpha(&self, point: &WorldPoint) -> Vec<f64> {
        let (mut obs, _) = self.observations(point);
        obs.truncate(self.window);
        obs
    }

    pub(super) fn target(&self, point: &WorldPoint) -> Vec<f64> {
        let (obs, _) = self.observations(point);
        vec![obs[self.window]]
    }

    pub(super) fn model_kind(&self, name: &str) -> Option<ModelKind> {
        (name == "state").then_some(ModelKind::Continuous(self.system.dim()))
    }

    pub(super) fn model_values(&self, _name: &str, point: &WorldPoint) -> Vec<f64> {
        self.observations(point).1
    }
}
