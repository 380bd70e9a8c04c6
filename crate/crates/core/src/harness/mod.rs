//! Config-driven pipelines: materialize, train, split, check, report.
//!
//! A run writes into one directory: `report.json`, the checkpoint
//! `net.bin`, the datasets (`train.bin`, `eval.bin`, `local.bin`) and one
//! intervention table per checked layer. Every file carries the config hash.

mod config;
mod pipeline;
mod report;
mod sweep;
mod verify;

use std::path::Path;

pub use config::{load_thresholds, resolve_out_dir, DataSpec, ExperimentConfig, NetSpec, SweepGrid};
pub use pipeline::{evaluate_layer, intervention_file, materialize_sets, run, Datasets, LayerOutcome, CHECKPOINT_FILE};
pub use report::{
    FileRef, InterventionSummary, LayerReport, NetMeta, Report, StageError, WorldMeta, REPORT_FILE,
};
pub use sweep::{read_sweep_csv, sweep, write_sweep_csv, SweepRow};
pub use verify::{report_file, verify, VerifyOutcome};

use crate::error::{Error, Result};
use crate::numcore::rng::streams;
use crate::numcore::RngStream;
use crate::worlds::materialize;

/// Process exit codes of the CLI.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VERIFY_MISMATCH: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const RUNTIME: i32 = 3;
    pub const MISSING_ARTIFACT: i32 = 4;
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config { .. } => exit::CONFIG,
        Error::MissingArtifact(_) => exit::MISSING_ARTIFACT,
        Error::HashMismatch { .. } => exit::VERIFY_MISMATCH,
        _ => exit::RUNTIME,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetSplit {
    Train,
    Eval,
}

/// Writes the configured train or eval dataset to `path`; returns its
/// sha256.
pub fn export_dataset(cfg: &ExperimentConfig, split: DatasetSplit, rows: Option<usize>, path: &Path) -> Result<String> {
    let world = cfg.world_spec()?;
    let (stream, default_rows) = match split {
        DatasetSplit::Train => (streams::WORLD_SAMPLE, cfg.data.train_rows),
        DatasetSplit::Eval => (streams::EVAL_SAMPLE, cfg.data.eval_rows),
    };
    let ds = materialize(&world, &mut RngStream::new(cfg.seed, stream), rows.unwrap_or(default_rows))?;
    let mut a = ds.to_artifact();
    a.set("config_hash", serde_json::json!(cfg.hash()));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    a.write(path)
}

#[cfg(test)]
mod tests;
