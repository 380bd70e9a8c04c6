use std::path::Path;

use serde_json::json;

use super::{Architecture, FactoredNetwork};
use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::worlds::TargetKind;

impl FactoredNetwork {
    pub fn to_artifact(&self, config_hash: Option<&str>) -> Artifact {
        let mut a = Artifact::new("network");
        a.set("architecture", serde_json::to_value(&self.arch).expect("plain enum"))
            .set("output", serde_json::to_value(self.output).expect("plain enum"))
            .set("cutoff", json!(self.cutoff))
            .set("seed", json!(self.seed))
            .set("config_hash", json!(config_hash));
        for (i, p) in self.params.iter().enumerate() {
            a.push_block(format!("p{i}"), p.clone());
        }
        a
    }

    pub fn from_artifact(a: &Artifact) -> Result<Self> {
        if a.kind() != Some("network") {
            return Err(Error::Format("artifact is not a network checkpoint".into()));
        }
        let h = &a.header;
        let arch: Architecture = serde_json::from_value(h["architecture"].clone())?;
        let output: TargetKind = serde_json::from_value(h["output"].clone())?;
        let cutoff = h["cutoff"]
            .as_u64()
            .ok_or_else(|| Error::Format("checkpoint lacks `cutoff`".into()))? as usize;
        let seed = h["seed"]
            .as_u64()
            .ok_or_else(|| Error::Format("checkpoint lacks `seed`".into()))?;
        let params = (0..a.blocks.len())
            .map(|i| a.block(&format!("p{i}")).cloned())
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(arch, output, params, cutoff, seed)
    }

    /// Writes the checkpoint and returns its sha256.
    pub fn save(&self, path: &Path, config_hash: Option<&str>) -> Result<String> {
        self.to_artifact(config_hash).write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_artifact(&Artifact::read(path)?)
    }

    /// The config hash recorded in a checkpoint file, if any.
    pub fn stored_config_hash(path: &Path) -> Result<Option<String>> {
        let a = Artifact::read(path)?;
        Ok(a.header
            .get("config_hash")
            .and_then(|v| v.as_str())
            .map(str::to_string))
    }
}
