use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ExperimentConfig;
use crate::criteria::{CriterionResult, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::nets::TrainTrace;

/// A file written next to the report, by relative path and content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldMeta {
    pub name: String,
    pub input_dim: usize,
    pub restriction: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetMeta {
    pub architecture: Value,
    pub parameters: usize,
    pub checkpoint: FileRef,
}

/// Success rates over non-no-op interventions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InterventionSummary {
    pub single: Option<f64>,
    pub ensemble: Option<f64>,
    pub ensemble_layers: Vec<usize>,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub results: Vec<CriterionResult>,
    pub interventions: InterventionSummary,
    pub intervention_table: Option<FileRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub world: Option<WorldMeta>,
    pub net: Option<NetMeta>,
    /// `train`, `eval` and `local` datasets.
    pub datasets: BTreeMap<String, FileRef>,
    pub train: Option<TrainTrace>,
    pub layers: Vec<LayerReport>,
    pub error: Option<StageError>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

pub const REPORT_FILE: &str = "report.json";

impl Report {
    pub(crate) fn new(config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: config.hash(),
            config: config.clone(),
            world: None,
            net: None,
            datasets: BTreeMap::new(),
            train: None,
            layers: Vec::new(),
            error: None,
            timings: BTreeMap::new(),
        }
    }

    pub fn results(&self) -> impl Iterator<Item = &CriterionResult> {
        self.layers.iter().flat_map(|l| &l.results)
    }

    /// The first result for `criterion` at `layer` in the given scope.
    pub fn result(&self, layer: usize, criterion: &str, scope: &str) -> Option<&CriterionResult> {
        self.layers
            .iter()
            .find(|l| l.layer == layer)?
            .results
            .iter()
            .find(|r| r.criterion == criterion && r.scope == scope)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Canonical JSON with the timings removed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v.as_object_mut().expect("object").remove("timings");
        Ok(v.to_string())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(REPORT_FILE), self.to_json()?)?;
        Ok(())
    }

    /// Reads `path`, or `path/report.json` when `path` is a directory.
    pub fn read(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
        if !file.exists() {
            return Err(Error::MissingArtifact(file));
        }
        let doc: Value = serde_json::from_slice(&std::fs::read(&file)?)?;
        match doc["schema_version"].as_u64() {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            other => return Err(Error::Format(format!("unsupported report schema {other:?}"))),
        }
        Ok(serde_json::from_value(doc)?)
    }
}
