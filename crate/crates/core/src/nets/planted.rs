//! Networks with a world model planted exactly.
//!
//! `f₁` decodes the world point from its input, writes `φ₁(w)` into a block of
//! designated coordinates and fills the remaining coordinates with a fixed
//! random nonlinear function of the input. `f₂` reads the designated block
//! back and emits `one-hot(m)`, so the coordinate projection `g` and
//! `φ₂ = one-hot` satisfy `φ₁ = g∘f₁∘α` and `φ₂∘g = f₂` with no error.
//!
//! The spurious variant keeps `f₁` but lets `f₂` read only the noise
//! coordinates: `Z` still contains the model, yet the output ignores it.

use serde::{Deserialize, Serialize};

use super::{Architecture, FactoredNetwork};
use crate::error::{Error, Result};
use crate::numcore::rng::streams;
use crate::numcore::{argmax, Matrix, RngStream};
use crate::worlds::{ModelKind, TargetKind, WorldParams, WorldSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantEncoding {
    /// `|M|` coordinates holding `one-hot(m)`.
    OneHot,
    /// A single coordinate holding `m` as a number.
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantPlan {
    pub world: WorldParams,
    pub model: String,
    pub model_classes: usize,
    pub input_dim: usize,
    pub encoding: PlantEncoding,
    /// First planted coordinate; noise fills `[0, offset)` and the tail.
    pub offset: usize,
    pub noise_dims: usize,
    pub spurious: bool,
}

/// The world's designated modeling function planted as one-hot coordinates
/// `[0, |M|)` followed by `noise_dims` noise coordinates.
pub fn plant_network(world: &WorldParams, noise_dims: usize, seed: u64) -> Result<FactoredNetwork> {
    let model = match world {
        WorldParams::Modadd { .. } => "sum",
        WorldParams::Token { .. } => "pos_final",
        WorldParams::Takens { .. } => {
            return Err(Error::InvalidSpec(
                "a dynamical-system world has no designated finite model to plant".into(),
            ))
        }
    };
    PlantPlan::new(world.clone(), model)?
        .with_noise_dims(noise_dims)
        .build(seed)
}

impl PlantPlan {
    pub fn new(world: WorldParams, model: &str) -> Result<Self> {
        let spec = world.build()?;
        let classes = match spec.model_kind(model)? {
            ModelKind::Categorical(n) => n,
            ModelKind::Continuous(_) => {
                return Err(Error::InvalidSpec(format!(
                    "planting needs a finite model, `{model}` is continuous"
                )))
            }
        };
        if spec.decode_input(&vec![0.0; spec.input_dim()]).is_none() {
            return Err(Error::InvalidSpec(format!(
                "{} inputs cannot be decoded into world points",
                spec.name()
            )));
        }
        Ok(Self {
            input_dim: spec.input_dim(),
            world,
            model: model.to_string(),
            model_classes: classes,
            encoding: PlantEncoding::OneHot,
            offset: 0,
            noise_dims: 0,
            spurious: false,
        })
    }

    pub fn with_noise_dims(mut self, n: usize) -> Self {
        self.noise_dims = n;
        self
    }

    pub fn with_encoding(mut self, e: PlantEncoding) -> Self {
        self.encoding = e;
        self
    }

    pub fn with_offset(mut self, offset: usize) -> Self {
        self.offset = offset;
        self
    }

    pub fn spurious(mut self, spurious: bool) -> Self {
        self.spurious = spurious;
        self
    }

    pub fn block_len(&self) -> usize {
        match self.encoding {
            PlantEncoding::OneHot => self.model_classes,
            PlantEncoding::Scalar => 1,
        }
    }

    /// `(first coordinate, length)` of the planted block in `Z`.
    pub fn planted_range(&self) -> (usize, usize) {
        (self.offset, self.block_len())
    }

    pub fn z_dim(&self) -> usize {
        self.noise_dims + self.block_len()
    }

    pub(super) fn param_shapes(&self) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        Ok(vec![
            (self.input_dim, self.noise_dims),
            (1, self.noise_dims),
            (self.noise_dims, self.model_classes),
        ])
    }

    fn validate(&self) -> Result<()> {
        if self.offset > self.noise_dims {
            return Err(Error::InvalidSpec(format!(
                "plant offset {} exceeds the {} noise coordinates",
                self.offset, self.noise_dims
            )));
        }
        if self.spurious && self.noise_dims == 0 {
            return Err(Error::InvalidSpec(
                "a spurious plant needs noise coordinates for f₂ to read".into(),
            ));
        }
        Ok(())
    }

    pub fn build(self, seed: u64) -> Result<FactoredNetwork> {
        self.validate()?;
        let mut rng = RngStream::new(seed, streams::PLANT);
        let params = vec![
            rng.normal_matrix(self.input_dim, self.noise_dims, 1.0),
            rng.normal_matrix(1, self.noise_dims, 0.5),
            rng.normal_matrix(self.noise_dims, self.model_classes, 1.0),
        ];
        let output = TargetKind::Classes(self.model_classes);
        FactoredNetwork::from_parts(Architecture::Planted(self), output, params, 1, seed)
    }

    fn noise(&self, params: &[Matrix], x: &Matrix) -> Result<Matrix> {
        Ok(x.matmul(&params[0])?
            .add_row_broadcast(&params[1])?
            .map(f64::tanh))
    }

    pub(super) fn f1(&self, world: &WorldSpec, params: &[Matrix], x: &Matrix) -> Result<Matrix> {
        let noise = self.noise(params, x)?;
        let block = self.block_len();
        let mut z = Matrix::zeros(x.rows(), self.z_dim());
        for r in 0..x.rows() {
            let point = world.decode_input(x.row(r)).ok_or_else(|| {
                Error::InvalidSpec(format!("row {r} is not a valid {} input", world.name()))
            })?;
            let m = world
                .model_label(&self.model, &point)?
                .expect("planted models are categorical");
            let row = z.row_mut(r);
            let nrow = noise.row(r);
            row[..self.offset].copy_from_slice(&nrow[..self.offset]);
            row[self.offset + block..].copy_from_slice(&nrow[self.offset..]);
            match self.encoding {
                PlantEncoding::OneHot => row[self.offset + m] = 1.0,
                PlantEncoding::Scalar => row[self.offset] = m as f64,
            }
        }
        Ok(z)
    }

    /// Model value read from the planted block.
    pub fn readout(&self, z_row: &[f64]) -> usize {
        let block = &z_row[self.offset..self.offset + self.block_len()];
        match self.encoding {
            PlantEncoding::OneHot => argmax(block),
            PlantEncoding::Scalar if self.model_classes == 2 => usize::from(block[0] >= 0.5),
            PlantEncoding::Scalar => {
                block[0].round().clamp(0.0, (self.model_classes - 1) as f64) as usize
            }
        }
    }

    pub(super) fn f2(&self, params: &[Matrix], z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.z_dim() {
            return Err(Error::shape(format!(
                "planted f₂ expects width {}, got {}",
                self.z_dim(),
                z.cols()
            )));
        }
        let block = self.block_len();
        let mut y = Matrix::zeros(z.rows(), self.model_classes);
        for r in 0..z.rows() {
            let m = if self.spurious {
                let row = z.row(r);
                let noise: Vec<f64> = row[..self.offset]
                    .iter()
                    .chain(&row[self.offset + block..])
                    .copied()
                    .collect();
                let scores = Matrix::row_vector(&noise).matmul(&params[2])?;
                argmax(scores.as_slice())
            } else {
                self.readout(z.row(r))
            };
            y[(r, m)] = 1.0;
        }
        Ok(y)
    }
}
