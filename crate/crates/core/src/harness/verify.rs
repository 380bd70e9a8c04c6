use std::path::{Path, PathBuf};

use serde_json::Value;

use super::pipeline::{evaluate_layer, Datasets, CHECKPOINT_FILE};
use super::report::{FileRef, REPORT_FILE};
use super::Report;
use crate::artifact::{file_sha256, sha256_hex, Artifact};
use crate::criteria::interventions_csv;
use crate::error::{Error, Result};
use crate::nets::FactoredNetwork;
use crate::worlds::LabeledDataset;

/// Fields whose recorded and recomputed values differ.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyOutcome {
    pub checked: usize,
    pub mismatches: Vec<String>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn check_file(dir: &Path, f: &FileRef) -> Result<PathBuf> {
    let path = dir.join(&f.path);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let found = file_sha256(&path)?;
    if found != f.sha256 {
        return Err(Error::HashMismatch {
            what: f.path.clone(),
            expected: f.sha256.clone(),
            found,
        });
    }
    Ok(path)
}

fn check_embedded_hash(path: &Path, expected: &str) -> Result<()> {
    let found = Artifact::read(path)?
        .header
        .get("config_hash")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    if found != expected {
        return Err(Error::HashMismatch {
            what: format!("config hash in {}", path.display()),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(())
}

fn load_dataset(dir: &Path, report: &Report, name: &str) -> Result<Option<LabeledDataset>> {
    report
        .datasets
        .get(name)
        .map(|f| {
            let path = check_file(dir, f)?;
            check_embedded_hash(&path, &report.config_hash)?;
            LabeledDataset::load(&path)
        })
        .transpose()
}

/// Appends `path: recorded vs recomputed` for every differing leaf.
fn diff(path: &str, recorded: &Value, recomputed: &Value, out: &mut Vec<String>) {
    match (recorded, recomputed) {
        (Value::Object(a), Value::Object(b)) => {
            let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
            for k in keys {
                diff(
                    &format!("{path}.{k}"),
                    a.get(k).unwrap_or(&Value::Null),
                    b.get(k).unwrap_or(&Value::Null),
                    out,
                );
            }
        }
        (Value::Array(a), Value::Array(b)) if a.len() == b.len() => {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                diff(&format!("{path}[{i}]"), x, y, out);
            }
        }
        (a, b) if a != b => out.push(format!("{path}: recorded {a} vs recomputed {b}")),
        _ => {}
    }
}

/// Re-derives every result of a report from its checkpoint and datasets.
///
/// Fails with `MissingArtifact` when a referenced file is absent and with
/// `HashMismatch` when a file or the config does not match the recorded
/// hash. Differences in recomputed values are listed in the outcome.
pub fn verify(report_path: &Path) -> Result<VerifyOutcome> {
    let report = Report::read(report_path)?;
    let dir = if report_path.is_dir() {
        report_path.to_path_buf()
    } else {
        report_path.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let cfg = &report.config;
    let hash = cfg.hash();
    if hash != report.config_hash {
        return Err(Error::HashMismatch {
            what: "config".into(),
            expected: report.config_hash.clone(),
            found: hash,
        });
    }
    if let Some(e) = &report.error {
        return Ok(VerifyOutcome {
            checked: 0,
            mismatches: vec![format!("error: run failed at stage `{}`: {}", e.stage, e.message)],
        });
    }
    let net_ref = report
        .net
        .as_ref()
        .map(|n| n.checkpoint.clone())
        .unwrap_or(FileRef {
            path: CHECKPOINT_FILE.into(),
            sha256: String::new(),
        });
    let net_path = check_file(&dir, &net_ref)?;
    check_embedded_hash(&net_path, &report.config_hash)?;
    let net = FactoredNetwork::load(&net_path)?;
    let data = Datasets {
        train: load_dataset(&dir, &report, "train")?,
        eval: load_dataset(&dir, &report, "eval")?
            .ok_or_else(|| Error::MissingArtifact(dir.join("eval.bin")))?,
        local: load_dataset(&dir, &report, "local")?,
    };

    let mut out = VerifyOutcome::default();
    for (i, recorded) in report.layers.iter().enumerate() {
        for (j, r) in recorded.results.iter().enumerate() {
            let derived = r.rederive();
            if derived != r.verdict {
                out.mismatches.push(format!(
                    "layers[{i}].results[{j}].verdict: recorded {:?} but scores imply {:?}",
                    r.verdict, derived
                ));
            }
        }
        let lo = evaluate_layer(cfg, &net, recorded.layer, &data)?;
        let mut fresh = lo.report;
        if let Some(t) = &recorded.intervention_table {
            let bytes = interventions_csv(&report.config_hash, &lo.interventions)?;
            fresh.intervention_table = Some(FileRef {
                path: t.path.clone(),
                sha256: sha256_hex(&bytes),
            });
            match check_file(&dir, t) {
                Ok(_) | Err(Error::HashMismatch { .. }) => {}
                Err(e) => return Err(e),
            }
            if file_sha256(&dir.join(&t.path))? != t.sha256 {
                out.mismatches
                    .push(format!("layers[{i}].intervention_table: {} was modified", t.path));
            }
        }
        diff(
            &format!("layers[{i}]"),
            &serde_json::to_value(recorded)?,
            &serde_json::to_value(&fresh)?,
            &mut out.mismatches,
        );
        out.checked += recorded.results.len();
    }
    Ok(out)
}

/// Resolves a report path given either the file or its directory.
pub fn report_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(REPORT_FILE)
    } else {
        path.to_path_buf()
    }
}
