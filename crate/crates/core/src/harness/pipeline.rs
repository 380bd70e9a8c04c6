use std::path::Path;
use std::time::Instant;

use serde_json::json;

use super::report::{FileRef, InterventionSummary, LayerReport, NetMeta, StageError, WorldMeta};
use super::{ExperimentConfig, Report};
use crate::artifact::sha256_hex;
use crate::criteria::{check_local, interventions_csv, run_checks, success_rate, InterventionOutcome};
use crate::error::{Error, Result};
use crate::nets::{train, FactoredNetwork};
use crate::numcore::rng::streams;
use crate::numcore::RngStream;
use crate::worlds::{materialize, LabeledDataset};

pub const CHECKPOINT_FILE: &str = "net.bin";

/// Datasets used by one run.
pub struct Datasets {
    pub train: Option<LabeledDataset>,
    pub eval: LabeledDataset,
    /// Drawn from the unrestricted world for the local check.
    pub local: Option<LabeledDataset>,
}

pub fn materialize_sets(cfg: &ExperimentConfig) -> Result<Datasets> {
    let world = cfg.world_spec()?;
    let train = if cfg.net.is_trainable() {
        Some(materialize(
            &world,
            &mut RngStream::new(cfg.seed, streams::WORLD_SAMPLE),
            cfg.data.train_rows,
        )?)
    } else {
        None
    };
    let eval = materialize(
        &world,
        &mut RngStream::new(cfg.seed, streams::EVAL_SAMPLE),
        cfg.data.eval_rows,
    )?;
    let local = if cfg.local.is_empty() {
        None
    } else {
        let mut rng = RngStream::new(cfg.seed, streams::EVAL_SAMPLE).substream(1);
        Some(materialize(&world.unrestricted(), &mut rng, cfg.data.eval_rows)?)
    };
    Ok(Datasets { train, eval, local })
}

/// Everything computed at one cut-off layer.
pub struct LayerOutcome {
    pub report: LayerReport,
    pub interventions: Vec<InterventionOutcome>,
}

/// Runs the checklist at `layer`: containment, learned, emergent,
/// causal-complete, causal-partial, local, off-manifold.
pub fn evaluate_layer(
    cfg: &ExperimentConfig,
    net: &FactoredNetwork,
    layer: usize,
    data: &Datasets,
) -> Result<LayerOutcome> {
    let run = run_checks(net, layer, &data.eval, &cfg.checks, cfg.seed, "global")?;
    let mut results = run.results;
    let off = results
        .iter()
        .position(|r| r.criterion == "off_manifold")
        .map(|i| results.remove(i));
    if let Some(local_data) = &data.local {
        let world = cfg.world.build()?;
        for r in &cfg.local {
            let local = check_local(&world, r, net, layer, local_data, &cfg.checks, cfg.seed)
                .map_err(|e| e.at_stage("local"))?;
            results.extend(local);
        }
    }
    results.extend(off);

    let ensemble_layers = cfg.checks.interventions.ensemble_layers.clone();
    let (single, ensemble): (Vec<_>, Vec<_>) = run
        .interventions
        .iter()
        .cloned()
        .partition(|o| o.layers == [layer]);
    let interventions = InterventionSummary {
        single: success_rate(&single),
        ensemble: success_rate(&ensemble),
        ensemble_layers: if ensemble.is_empty() { Vec::new() } else { ensemble_layers },
        rows: run.interventions.len(),
    };
    Ok(LayerOutcome {
        report: LayerReport {
            layer,
            results,
            interventions,
            intervention_table: None,
        },
        interventions: run.interventions,
    })
}

pub fn intervention_file(layer: usize) -> String {
    format!("interventions_layer{layer}.csv")
}

fn write_dataset(dir: &Path, name: &str, ds: &LabeledDataset, hash: &str) -> Result<FileRef> {
    let path = format!("{name}.bin");
    let mut a = ds.to_artifact();
    a.set("config_hash", json!(hash));
    let sha256 = a.write(&dir.join(&path))?;
    Ok(FileRef { path, sha256 })
}

fn timed<T>(report: &mut Report, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| e.at_stage(stage));
    *report.timings.entry(stage.to_string()).or_default() += t.elapsed().as_secs_f64();
    out
}

/// Materializes data, trains (or plants) the network, runs the checks at
/// every configured layer and writes the report, checkpoint, datasets and
/// intervention tables into `out`.
///
/// On a runtime error the partial report, with the failing stage, is still
/// written before the error is returned.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut report = Report::new(cfg);
    let outcome = run_into(cfg, out, &mut report);
    if let Err(e) = &outcome {
        let (stage, message) = match e {
            Error::Stage { stage, source } => (stage.clone(), source.to_string()),
            e => ("run".to_string(), e.to_string()),
        };
        report.error = Some(StageError { stage, message });
    }
    report.write(out)?;
    outcome.map(|()| report)
}

fn run_into(cfg: &ExperimentConfig, out: &Path, report: &mut Report) -> Result<()> {
    let hash = report.config_hash.clone();
    let data = timed(report, "materialize", || materialize_sets(cfg))?;
    let world = cfg.world_spec()?;
    report.world = Some(WorldMeta {
        name: world.name(),
        input_dim: world.input_dim(),
        restriction: cfg.restriction.clone(),
    });
    for (name, ds) in [("train", data.train.as_ref()), ("eval", Some(&data.eval)), ("local", data.local.as_ref())] {
        if let Some(ds) = ds {
            let f = timed(report, "write", || write_dataset(out, name, ds, &hash))?;
            report.datasets.insert(name.to_string(), f);
        }
    }

    let mut net = timed(report, "build", || cfg.build_net())?;
    if let (Some(tc), Some(train_set)) = (&cfg.train, &data.train) {
        let trace = timed(report, "train", || train(&mut net, train_set, tc))?;
        report.train = Some(trace);
    }
    let sha256 = timed(report, "write", || net.save(&out.join(CHECKPOINT_FILE), Some(&hash)))?;
    report.net = Some(NetMeta {
        architecture: serde_json::to_value(net.architecture())?,
        parameters: net.params().iter().map(|p| p.rows() * p.cols()).sum(),
        checkpoint: FileRef {
            path: CHECKPOINT_FILE.into(),
            sha256,
        },
    });

    for layer in cfg.check_layers(&net) {
        let stage = format!("checks:layer{layer}");
        let mut lo = timed(report, &stage, || evaluate_layer(cfg, &net, layer, &data))?;
        if !lo.interventions.is_empty() {
            let path = intervention_file(layer);
            let bytes = interventions_csv(&hash, &lo.interventions)?;
            std::fs::write(out.join(&path), &bytes)?;
            lo.report.intervention_table = Some(FileRef {
                path,
                sha256: sha256_hex(&bytes),
            });
        }
        report.layers.push(lo.report);
    }
    Ok(())
}
