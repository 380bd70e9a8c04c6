use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{evaluate_layer, materialize_sets};
use super::{ExperimentConfig, SweepGrid};
use crate::error::{Error, Result};
use crate::nets::train;

/// One `(seed, layer, criterion)` row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_hash: String,
    pub seed: u64,
    pub layer: usize,
    pub criterion: String,
    pub scope: String,
    pub verdict: String,
    pub score: Option<f64>,
    pub error: Option<f64>,
    pub reference: Option<f64>,
    pub notice: String,
}

fn seed_rows(cfg: &ExperimentConfig, grid: &SweepGrid, hash: &str, seed: u64) -> Vec<SweepRow> {
    let row = |layer: usize, criterion: &str| SweepRow {
        config_hash: hash.to_string(),
        seed,
        layer,
        criterion: criterion.to_string(),
        scope: "global".into(),
        verdict: String::new(),
        score: None,
        error: None,
        reference: None,
        notice: String::new(),
    };
    let cfg = cfg.clone().with_seed(seed);
    let setup = (|| {
        let data = materialize_sets(&cfg)?;
        let mut net = cfg.build_net()?;
        if let (Some(tc), Some(t)) = (&cfg.train, &data.train) {
            train(&mut net, t, tc).map_err(|e| e.at_stage("train"))?;
        }
        Ok::<_, Error>((data, net))
    })();
    let (data, net) = match setup {
        Ok(x) => x,
        Err(e) => {
            return grid
                .layers
                .iter()
                .map(|&l| SweepRow {
                    verdict: "ERROR".into(),
                    notice: e.to_string(),
                    ..row(l, "error")
                })
                .collect()
        }
    };
    let mut rows = Vec::new();
    for &layer in &grid.layers {
        match evaluate_layer(&cfg, &net, layer, &data) {
            Ok(lo) => {
                for r in &lo.report.results {
                    rows.push(SweepRow {
                        scope: r.scope.clone(),
                        verdict: format!("{:?}", r.verdict).to_uppercase(),
                        score: Some(r.score),
                        error: Some(r.error),
                        reference: r.reference,
                        notice: r.notice.clone().unwrap_or_default(),
                        ..row(layer, &r.criterion)
                    });
                }
                let s = &lo.report.interventions;
                rows.push(SweepRow {
                    score: s.single,
                    notice: format!("layers {layer}"),
                    ..row(layer, "intervention_single")
                });
                if !s.ensemble_layers.is_empty() {
                    let layers: Vec<String> = s.ensemble_layers.iter().map(usize::to_string).collect();
                    rows.push(SweepRow {
                        score: s.ensemble,
                        notice: format!("layers {}", layers.join("+")),
                        ..row(layer, "intervention_ensemble")
                    });
                }
            }
            Err(e) => rows.push(SweepRow {
                verdict: "ERROR".into(),
                notice: e.to_string(),
                ..row(layer, "error")
            }),
        }
    }
    rows
}

/// Runs the checks at every `(seed, layer)` of the grid, training once per
/// seed. Seeds run in parallel on `workers` threads; rows come back in grid
/// order. Failures become `error` rows and the sweep continues.
pub fn sweep(cfg: &ExperimentConfig, grid: &SweepGrid, workers: usize) -> Result<Vec<SweepRow>> {
    if grid.layers.is_empty() || grid.seeds.is_empty() {
        return Err(Error::Config {
            location: "sweep".into(),
            message: "grid must list at least one layer and one seed".into(),
        });
    }
    let net = cfg.build_net()?;
    for &l in &grid.layers {
        net.split(l).map_err(|e| Error::Config {
            location: "sweep.layers".into(),
            message: e.to_string(),
        })?;
    }
    let hash = cfg.hash();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let per_seed: Vec<Vec<SweepRow>> = pool.install(|| {
        grid.seeds
            .par_iter()
            .map(|&seed| seed_rows(cfg, grid, &hash, seed))
            .collect()
    });
    Ok(per_seed.into_iter().flatten().collect())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("csv: {e}")))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("csv: {e}")))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<SweepRow>, _>>()
        .map_err(|e| Error::Format(format!("csv: {e}")))
}
