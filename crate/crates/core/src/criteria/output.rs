use std::path::Path;

use serde_json::{json, Value};

use super::{CriterionResult, InterventionOutcome};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Writes results as `{"schema_version", "results": [...]}`.
pub fn write_results_json(path: &Path, results: &[CriterionResult]) -> Result<()> {
    let doc = json!({ "schema_version": SCHEMA_VERSION, "results": results });
    std::fs::write(path, serde_json::to_vec_pretty(&doc)?)?;
    Ok(())
}

pub fn read_results_json(path: &Path) -> Result<Vec<CriterionResult>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let doc: Value = serde_json::from_slice(&std::fs::read(path)?)?;
    match doc["schema_version"].as_u64() {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        other => return Err(Error::Format(format!("unsupported result schema {other:?}"))),
    }
    Ok(serde_json::from_value(doc["results"].clone())?)
}

/// One row per outcome: config hash, input, target, layers (joined by
/// `+`), aspects, no-op flag and success flag.
pub fn interventions_csv(config_hash: &str, outcomes: &[InterventionOutcome]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "config_hash", "input", "target", "layers", "pre_aspect", "post_aspect", "expected", "noop", "success",
    ])
    .map_err(csv_err)?;
    for o in outcomes {
        let layers: Vec<String> = o.layers.iter().map(usize::to_string).collect();
        w.write_record([
            config_hash.to_string(),
            o.input.to_string(),
            o.target.clone(),
            layers.join("+"),
            o.pre_aspect.to_string(),
            o.post_aspect.to_string(),
            o.expected.to_string(),
            o.noop.to_string(),
            o.success.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

pub fn write_interventions_csv(path: &Path, config_hash: &str, outcomes: &[InterventionOutcome]) -> Result<()> {
    std::fs::write(path, interventions_csv(config_hash, outcomes)?)?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}
