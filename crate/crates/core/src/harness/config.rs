use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::sha256_hex;
use crate::criteria::{CheckPlan, Thresholds};
use crate::error::{Error, Result};
use crate::nets::{
    build_mlp_with, build_seqnet, Activation, FactoredNetwork, PlantEncoding, PlantPlan, TrainConfig,
};
use crate::worlds::{restrict, WorldParams, WorldSpec, TOKEN_VOCAB};

/// Rows drawn for training and for the checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Ignored by networks that are not trained.
    #[serde(default)]
    pub train_rows: usize,
    pub eval_rows: usize,
}

fn tanh() -> Activation {
    Activation::Tanh
}

fn one_hot() -> PlantEncoding {
    PlantEncoding::OneHot
}

/// Input and output widths come from the world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetSpec {
    Mlp {
        hidden: Vec<usize>,
        #[serde(default)]
        residual: bool,
        #[serde(default = "tanh")]
        activation: Activation,
    },
    Seqnet {
        width: usize,
        layers: usize,
    },
    Planted {
        model: String,
        noise_dims: usize,
        #[serde(default)]
        spurious: bool,
        #[serde(default = "one_hot")]
        encoding: PlantEncoding,
        #[serde(default)]
        offset: usize,
    },
}

impl NetSpec {
    pub fn is_trainable(&self) -> bool {
        !matches!(self, Self::Planted { .. })
    }
}

/// Cut-off layers and seeds visited by a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub layers: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub world: WorldParams,
    /// Restriction applied to the world the network is trained and checked on.
    #[serde(default)]
    pub restriction: Option<String>,
    pub data: DataSpec,
    pub net: NetSpec,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// Cut-off layers to check; empty uses the network's default.
    #[serde(default)]
    pub layers: Vec<usize>,
    pub checks: CheckPlan,
    /// Restrictions rerun by the local check, on data from the unrestricted
    /// world.
    #[serde(default)]
    pub local: Vec<String>,
    /// Drives data, initialization and the checks.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn config_error(location: impl Into<String>, message: impl ToString) -> Error {
    Error::Config {
        location: location.into(),
        message: message.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            config_error(format!("line {} column {}", e.line(), e.column()), e)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(path.display().to_string(), e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { location, message } => {
                config_error(format!("{}: {location}", path.display()), message)
            }
            e => e,
        })
    }

    /// Replaces every seed, including the training seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let Some(t) = &mut self.train {
            t.seed = seed;
        }
        self
    }

    pub fn with_thresholds(mut self, th: Thresholds) -> Result<Self> {
        self.checks.thresholds = th;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let world = self.world.build().map_err(|e| config_error("world", e))?;
        if let Some(r) = &self.restriction {
            restrict(&world, r).map_err(|e| config_error("restriction", e))?;
        }
        for r in &self.local {
            let base = r.strip_prefix('!').unwrap_or(r);
            if !world.restrictions().iter().any(|x| x == base) {
                return Err(config_error("local", format!("no restriction `{base}` on {}", world.name())));
            }
        }
        world
            .model_kind(&self.checks.model)
            .map_err(|e| config_error("checks.model", e))?;
        self.checks.validate().map_err(|e| config_error("checks", e))?;
        if self.data.eval_rows == 0 {
            return Err(config_error("data.eval_rows", "must be positive"));
        }
        match (&self.train, self.net.is_trainable()) {
            (Some(t), true) => {
                t.validate().map_err(|e| config_error("train", e))?;
                if self.data.train_rows == 0 {
                    return Err(config_error("data.train_rows", "must be positive for a trained network"));
                }
            }
            (None, true) => return Err(config_error("train", "a trainable network needs a train config")),
            (Some(_), false) => return Err(config_error("train", "planted networks are not trained")),
            (None, false) => {}
        }
        if let Some(g) = &self.sweep {
            if g.layers.is_empty() || g.seeds.is_empty() {
                return Err(config_error("sweep", "grid must list at least one layer and one seed"));
            }
        }
        let net = self.build_net().map_err(|e| config_error("net", e))?;
        for &l in self.layers.iter().chain(self.sweep.iter().flat_map(|g| &g.layers)) {
            net.split(l).map_err(|e| config_error("layers", e))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted) JSON of the config, without the
    /// output directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn world_spec(&self) -> Result<WorldSpec> {
        let w = self.world.build()?;
        match &self.restriction {
            Some(r) => restrict(&w, r),
            None => Ok(w),
        }
    }

    /// The untrained (or planted) network.
    pub fn build_net(&self) -> Result<FactoredNetwork> {
        let world = self.world.build()?;
        let output = world.target_kind();
        match &self.net {
            NetSpec::Mlp {
                hidden,
                residual,
                activation,
            } => {
                let mut dims = vec![world.input_dim()];
                dims.extend(hidden);
                dims.push(output.dim());
                build_mlp_with(&dims, *residual, *activation, output, self.seed)
            }
            NetSpec::Seqnet { width, layers } => {
                let WorldParams::Token { program_length, .. } = self.world else {
                    return Err(Error::InvalidSpec("sequence models need a token world".into()));
                };
                build_seqnet(TOKEN_VOCAB, *width, *layers, program_length, output.dim(), self.seed)
            }
            NetSpec::Planted {
                model,
                noise_dims,
                spurious,
                encoding,
                offset,
            } => PlantPlan::new(self.world.clone(), model)?
                .with_noise_dims(*noise_dims)
                .with_encoding(*encoding)
                .with_offset(*offset)
                .spurious(*spurious)
                .build(self.seed),
        }
    }

    /// Layers the checks visit.
    pub fn check_layers(&self, net: &FactoredNetwork) -> Vec<usize> {
        if self.layers.is_empty() {
            vec![net.cutoff()]
        } else {
            self.layers.clone()
        }
    }
}

/// `--out`, then `WORLDCERT_OUT`, then the config's directory, then
/// `out/<name>`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os("WORLDCERT_OUT") {
        return PathBuf::from(p).join(&cfg.name);
    }
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

/// Reads a thresholds file; unknown fields are rejected.
pub fn load_thresholds(path: &Path) -> Result<Thresholds> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(path.display().to_string(), e))?;
    let th: Thresholds = serde_json::from_str(&text).map_err(|e| {
        config_error(format!("{}: line {} column {}", path.display(), e.line(), e.column()), e)
    })?;
    th.validate().map_err(|e| config_error(path.display().to_string(), e))?;
    Ok(th)
}
