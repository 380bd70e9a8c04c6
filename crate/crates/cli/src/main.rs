use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use worldcert::harness::{
    self, exit, export_dataset, load_thresholds, resolve_out_dir, run, sweep, verify, write_sweep_csv,
    DatasetSplit, ExperimentConfig, SweepGrid,
};
use worldcert::{Error, Result};

#[derive(Parser)]
#[command(name = "worldcert", version, about = "Certify world models inside small networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize, train, check and write a report.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Recompute every score of a report from its artifacts.
    Verify {
        /// Report file or run directory.
        report: PathBuf,
    },
    /// Run the checks over a grid of cut-off layers and seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated cut-off layers; defaults to the config's grid.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        /// Comma-separated seeds; defaults to the config's grid.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Write the configured dataset to a file.
    ExportDataset {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Split::Eval)]
        split: Split,
        /// Row count; defaults to the config's.
        #[arg(long)]
        rows: Option<usize>,
    },
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (or file for export-dataset).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file replacing the config's thresholds.
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Eval,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(path) = &self.thresholds {
            cfg = cfg.with_thresholds(load_thresholds(path)?)?;
        }
        Ok(cfg)
    }
}

fn cmd_run(common: &Common) -> Result<i32> {
    let cfg = common.load()?;
    let out = resolve_out_dir(common.out.as_deref(), &cfg);
    let report = run(&cfg, &out)?;
    for layer in &report.layers {
        for r in &layer.results {
            println!("layer {} {:<16} {:<22} {:<14} score {:.4}", layer.layer, r.criterion, r.scope, r.label, r.score);
        }
    }
    println!("report: {}", out.join(harness::REPORT_FILE).display());
    Ok(exit::OK)
}

fn cmd_verify(report: &Path) -> Result<i32> {
    let outcome = verify(report)?;
    if outcome.passed() {
        println!("verified {} results", outcome.checked);
        return Ok(exit::OK);
    }
    for m in &outcome.mismatches {
        println!("mismatch {m}");
    }
    Ok(exit::VERIFY_MISMATCH)
}

fn cmd_sweep(common: &Common, layers: Option<Vec<usize>>, seeds: Option<Vec<u64>>, workers: usize) -> Result<i32> {
    let cfg = common.load()?;
    let base = cfg.sweep.clone();
    let grid = SweepGrid {
        layers: layers.or_else(|| base.as_ref().map(|g| g.layers.clone())).unwrap_or_default(),
        seeds: seeds.or_else(|| base.as_ref().map(|g| g.seeds.clone())).unwrap_or_default(),
    };
    let rows = sweep(&cfg, &grid, workers)?;
    let out = resolve_out_dir(common.out.as_deref(), &cfg);
    std::fs::create_dir_all(&out)?;
    let path = out.join("sweep.csv");
    write_sweep_csv(&path, &rows)?;
    println!("{} rows: {}", rows.len(), path.display());
    Ok(exit::OK)
}

fn cmd_export(common: &Common, split: Split, rows: Option<usize>) -> Result<i32> {
    let cfg = common.load()?;
    let split = match split {
        Split::Train => DatasetSplit::Train,
        Split::Eval => DatasetSplit::Eval,
    };
    let path = match &common.out {
        Some(p) => p.clone(),
        None => resolve_out_dir(None, &cfg).join("dataset.bin"),
    };
    let sha = export_dataset(&cfg, split, rows, &path)?;
    println!("{} sha256 {sha}", path.display());
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { common } => cmd_run(common),
        Command::Verify { report } => cmd_verify(report),
        Command::Sweep {
            common,
            layers,
            seeds,
            workers,
        } => cmd_sweep(common, layers.clone(), seeds.clone(), *workers),
        Command::ExportDataset { common, split, rows } => cmd_export(common, *split, *rows),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(e) => {
            match &e {
                Error::Stage { stage, source } => eprintln!("error in stage {stage}: {source}"),
                e => eprintln!("error: {e}"),
            }
            harness::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
