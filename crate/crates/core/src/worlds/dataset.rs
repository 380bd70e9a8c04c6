use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use super::{ModelKind, TargetKind, WorldPoint, WorldSpec};
use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Samples of one modeling function `φ₁` over a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelColumn {
    pub kind: ModelKind,
    /// One-hot rows for categorical models, raw values otherwise.
    pub values: Matrix,
    /// Class labels for categorical models.
    pub labels: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub world: String,
    /// Seed of the stream the rows were drawn from; `None` for exhaustive sets.
    pub seed: Option<u64>,
    pub inputs: Matrix,
    pub targets: Matrix,
    pub target_kind: TargetKind,
    pub models: BTreeMap<String, ModelColumn>,
    /// Membership of each row in every registered restriction predicate.
    pub restriction_masks: BTreeMap<String, Vec<bool>>,
}

impl LabeledDataset {
    pub fn from_points(world: &WorldSpec, points: &[WorldPoint], seed: Option<u64>) -> Result<Self> {
        let n = points.len();
        if let Some(bad) = points.iter().find(|p| !world.is_valid(p)) {
            return Err(Error::InvalidWorldParam(format!("invalid point {bad:?}")));
        }
        let x_rows: Vec<Vec<f64>> = points.iter().map(|p| world.alpha(p)).collect();
        let y_rows: Vec<Vec<f64>> = points.iter().map(|p| world.target(p)).collect();
        let inputs = rows_or_empty(&x_rows, world.input_dim());
        let targets = rows_or_empty(&y_rows, world.target_kind().dim());

        let mut models = BTreeMap::new();
        for name in world.modeling_fns() {
            let kind = world.model_kind(&name)?;
            let values: Vec<Vec<f64>> = points
                .iter()
                .map(|p| world.model_values(&name, p))
                .collect::<Result<_>>()?;
            let labels = match kind {
                ModelKind::Categorical(_) => Some(
                    points
                        .iter()
                        .map(|p| Ok(world.model_label(&name, p)?.expect("categorical")))
                        .collect::<Result<Vec<_>>>()?,
                ),
                ModelKind::Continuous(_) => None,
            };
            models.insert(
                name,
                ModelColumn {
                    kind,
                    values: rows_or_empty(&values, kind.dim()),
                    labels,
                },
            );
        }

        let mut restriction_masks = BTreeMap::new();
        for r in world.restrictions() {
            let mask = points
                .iter()
                .map(|p| world.predicate(&r, p))
                .collect::<Result<Vec<_>>>()?;
            restriction_masks.insert(r, mask);
        }
        debug_assert_eq!(inputs.rows(), n);
        Ok(Self {
            world: world.name(),
            seed,
            inputs,
            targets,
            target_kind: world.target_kind(),
            models,
            restriction_masks,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn model(&self, name: &str) -> Result<&ModelColumn> {
        self.models.get(name).ok_or_else(|| {
            Error::InvalidWorldParam(format!("dataset has no modeling function `{name}`"))
        })
    }

    /// Argmax of each one-hot target row, for classification worlds.
    pub fn target_labels(&self) -> Option<Vec<usize>> {
        match self.target_kind {
            TargetKind::Classes(_) => Some(
                (0..self.targets.rows())
                    .map(|r| self.targets.argmax_row(r))
                    .collect(),
            ),
            TargetKind::Values(_) => None,
        }
    }

    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            world: self.world.clone(),
            seed: self.seed,
            inputs: self.inputs.select_rows(indices),
            targets: self.targets.select_rows(indices),
            target_kind: self.target_kind,
            models: self
                .models
                .iter()
                .map(|(k, c)| {
                    (
                        k.clone(),
                        ModelColumn {
                            kind: c.kind,
                            values: c.values.select_rows(indices),
                            labels: c
                                .labels
                                .as_ref()
                                .map(|l| indices.iter().map(|&i| l[i]).collect()),
                        },
                    )
                })
                .collect(),
            restriction_masks: self
                .restriction_masks
                .iter()
                .map(|(k, m)| (k.clone(), indices.iter().map(|&i| m[i]).collect()))
                .collect(),
        }
    }

    pub fn to_artifact(&self) -> Artifact {
        let mut a = Artifact::new("dataset");
        a.set("world", json!(self.world))
            .set("seed", json!(self.seed))
            .set("rows", json!(self.len()))
            .set("input_dim", json!(self.inputs.cols()))
            .set("target_kind", serde_json::to_value(self.target_kind).expect("plain enum"));
        let kinds: BTreeMap<&String, ModelKind> =
            self.models.iter().map(|(k, c)| (k, c.kind)).collect();
        a.set("models", serde_json::to_value(kinds).expect("plain map"));
        a.push_block("inputs", self.inputs.clone());
        a.push_block("targets", self.targets.clone());
        for (name, col) in &self.models {
            a.push_block(format!("model:{name}"), col.values.clone());
        }
        for (name, mask) in &self.restriction_masks {
            let m = Matrix::column(&mask.iter().map(|&b| f64::from(u8::from(b))).collect::<Vec<_>>());
            a.push_block(format!("mask:{name}"), m);
        }
        a
    }

    pub fn from_artifact(a: &Artifact) -> Result<Self> {
        if a.kind() != Some("dataset") {
            return Err(Error::Format("artifact is not a dataset".into()));
        }
        let header = &a.header;
        let world = header["world"].as_str().unwrap_or_default().to_string();
        let seed = header["seed"].as_u64();
        let target_kind: TargetKind = serde_json::from_value(header["target_kind"].clone())?;
        let kinds: BTreeMap<String, ModelKind> = serde_json::from_value(header["models"].clone())?;
        let mut models = BTreeMap::new();
        for (name, kind) in kinds {
            let values = a.block(&format!("model:{name}"))?.clone();
            let labels = kind
                .is_categorical()
                .then(|| (0..values.rows()).map(|r| values.argmax_row(r)).collect());
            models.insert(name, ModelColumn { kind, values, labels });
        }
        let mut restriction_masks = BTreeMap::new();
        for (name, m) in &a.blocks {
            if let Some(r) = name.strip_prefix("mask:") {
                restriction_masks.insert(r.to_string(), m.as_slice().iter().map(|&v| v != 0.0).collect());
            }
        }
        Ok(Self {
            world,
            seed,
            inputs: a.block("inputs")?.clone(),
            targets: a.block("targets")?.clone(),
            target_kind,
            models,
            restriction_masks,
        })
    }

    /// Writes the dataset file and returns its sha256.
    pub fn save(&self, path: &Path) -> Result<String> {
        self.to_artifact().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_artifact(&Artifact::read(path)?)
    }
}

fn rows_or_empty(rows: &[Vec<f64>], cols: usize) -> Matrix {
    if rows.is_empty() {
        Matrix::zeros(0, cols)
    } else {
        Matrix::from_rows(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;
    use crate::worlds::{
        materialize, materialize_exhaustive, modadd_world, takens_world, token_world,
        DynamicalSystem, Observation,
    };

    #[test]
    fn materialize_is_deterministic() {
        let w = modadd_world(7).unwrap();
        let a = materialize(&w, &mut RngStream::new(4, 1), 1).unwrap();
        let b = materialize(&w, &mut RngStream::new(4, 1), 1).unwrap();
        assert_eq!(a, b);
        let c = materialize(&w, &mut RngStream::new(4, 1), 300).unwrap();
        let d = materialize(&w, &mut RngStream::new(4, 1), 300).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn exhaustive_modadd_hits_each_pair_once() {
        let ds = materialize_exhaustive(&modadd_world(7).unwrap()).unwrap();
        assert_eq!(ds.len(), 49);
        let mut count = [[0usize; 7]; 7];
        for r in 0..49 {
            let x = ds.inputs.row(r);
            let a = x[..7].iter().position(|&v| v == 1.0).unwrap();
            let b = x[7..].iter().position(|&v| v == 1.0).unwrap();
            count[a][b] += 1;
            assert_eq!(ds.model("sum").unwrap().labels.as_ref().unwrap()[r], (a + b) % 7);
        }
        assert!(count.iter().flatten().all(|&c| c == 1));
    }

    #[test]
    fn rows_reproduce_from_points() {
        let w = token_world(5, 6).unwrap();
        let mut rng = RngStream::new(8, 1);
        let points = w.sample(&mut rng.clone(), 50).unwrap();
        let ds = materialize(&w, &mut rng, 50).unwrap();
        for (r, p) in points.iter().enumerate() {
            assert_eq!(ds.inputs.row(r), w.alpha(p).as_slice());
            assert_eq!(ds.targets.row(r), w.target(p).as_slice());
            assert_eq!(
                ds.model("pos_3").unwrap().values.row(r),
                w.model_values("pos_3", p).unwrap().as_slice()
            );
            assert!(ds.model("pos_final").unwrap().labels.as_ref().unwrap()[r] < 5);
        }
    }

    #[test]
    fn file_round_trip() {
        let w = takens_world(
            DynamicalSystem::Rotation { theta: 0.7 },
            Observation::Coordinate { index: 0 },
            5,
            false,
        )
        .unwrap();
        let ds = materialize(&w, &mut RngStream::new(2, 1), 40).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        ds.save(&path).unwrap();
        assert_eq!(LabeledDataset::load(&path).unwrap(), ds);

        let m = materialize(&modadd_world(5).unwrap(), &mut RngStream::new(2, 1), 40).unwrap();
        m.save(&path).unwrap();
        assert_eq!(LabeledDataset::load(&path).unwrap(), m);
    }
}
