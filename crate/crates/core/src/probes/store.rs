use std::path::Path;

use serde_json::json;

use super::{Diagnostics, FunctionClass, Probe, ProbeOutput, ProbeParams};
use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::numcore::Matrix;

impl Probe {
    pub fn to_artifact(&self, config_hash: Option<&str>) -> Artifact {
        let mut a = Artifact::new("probe");
        a.set("class", serde_json::to_value(self.class).expect("plain struct"))
            .set("input_dim", json!(self.input_dim))
            .set("window", json!(self.window))
            .set("output", serde_json::to_value(self.output).expect("plain enum"))
            .set("diagnostics", serde_json::to_value(&self.diagnostics).expect("plain struct"))
            .set("config_hash", json!(config_hash));
        match &self.params {
            ProbeParams::Linear { w, b } => {
                a.set("params", json!("linear"));
                a.push_block("w", w.clone()).push_block("b", b.clone());
            }
            ProbeParams::Coordinate(map) => {
                a.set("params", json!("coordinate"))
                    .set("map", serde_json::to_value(map).expect("plain enum"));
            }
            ProbeParams::Mlp {
                mean,
                scale,
                w1,
                b1,
                w2,
                b2,
            } => {
                a.set("params", json!("mlp"));
                a.push_block("mean", Matrix::row_vector(mean))
                    .push_block("scale", Matrix::row_vector(scale))
                    .push_block("w1", w1.clone())
                    .push_block("b1", b1.clone())
                    .push_block("w2", w2.clone())
                    .push_block("b2", b2.clone());
            }
        }
        a
    }

    pub fn from_artifact(a: &Artifact) -> Result<Self> {
        if a.kind() != Some("probe") {
            return Err(Error::Format("artifact is not a probe".into()));
        }
        let h = &a.header;
        let class: FunctionClass = serde_json::from_value(h["class"].clone())?;
        let window: Option<(usize, usize)> = serde_json::from_value(h["window"].clone())?;
        let output: ProbeOutput = serde_json::from_value(h["output"].clone())?;
        let diagnostics: Diagnostics = serde_json::from_value(h["diagnostics"].clone())?;
        let input_dim = h["input_dim"]
            .as_u64()
            .ok_or_else(|| Error::Format("probe lacks `input_dim`".into()))? as usize;
        let block = |n: &str| a.block(n).cloned();
        let params = match h["params"].as_str() {
            Some("linear") => ProbeParams::Linear {
                w: block("w")?,
                b: block("b")?,
            },
            Some("coordinate") => ProbeParams::Coordinate(serde_json::from_value(h["map"].clone())?),
            Some("mlp") => ProbeParams::Mlp {
                mean: block("mean")?.into_vec(),
                scale: block("scale")?.into_vec(),
                w1: block("w1")?,
                b1: block("b1")?,
                w2: block("w2")?,
                b2: block("b2")?,
            },
            other => return Err(Error::Format(format!("unknown probe parameters {other:?}"))),
        };
        Ok(Self {
            class,
            input_dim,
            window,
            output,
            params,
            diagnostics,
        })
    }

    pub fn save(&self, path: &Path, config_hash: Option<&str>) -> Result<String> {
        self.to_artifact(config_hash).write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_artifact(&Artifact::read(path)?)
    }

    /// sha256 of the probe's serialized form; identifies a fitted probe.
    pub fn fingerprint(&self) -> String {
        let bytes = self.to_artifact(None).to_bytes().expect("probe serializes");
        crate::artifact::sha256_hex(&bytes)
    }
}
