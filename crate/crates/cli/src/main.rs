mod commands;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{load_config, Outcome};
use report::{write_outputs, ExperimentReport};

/// Pruned listwise reranking: bound checks, simulations, cost model, metrics.
///
/// Every subcommand writes `report.json`, `tables/*.csv` and `timing.json`
/// into `--out`. Exit status is 0 when all verification tallies pass, 1 when
/// any fails, and 2 on errors.
#[derive(Debug, Parser)]
#[command(name = "prunerank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config; defaults are used for missing fields or when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Randomized checks of the max/LSE sandwich, top-K stability, pruning error and tail-gap bounds.
    VerifyBounds(Common),
    /// Max-sim versus random pruning on planted-relevance data; optionally prune given embeddings.
    Simulate(Common),
    /// FLOPs of full-context versus pruned reranking, with an optional sweep.
    CostModel(Common),
    /// Recall@k, nDCG and failure analysis over judged queries.
    Metrics(Common),
}

fn run(cli: Cli) -> Result<bool> {
    let start = Instant::now();
    let (name, common) = match &cli.command {
        Command::VerifyBounds(c) => ("verify-bounds", c),
        Command::Simulate(c) => ("simulate", c),
        Command::CostModel(c) => ("cost-model", c),
        Command::Metrics(c) => ("metrics", c),
    };
    let cfg_path = common.config.as_deref();
    let base_dir = cfg_path
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let outcome: Outcome = match &cli.command {
        Command::VerifyBounds(_) => commands::verify_bounds(&load_config(cfg_path)?, common.seed)?,
        Command::Simulate(_) => {
            commands::simulate(&load_config(cfg_path)?, common.seed, &base_dir)?
        }
        Command::CostModel(_) => commands::cost_model(&load_config(cfg_path)?)?,
        Command::Metrics(_) => commands::metrics(cfg_path)?,
    };
    let report = ExperimentReport {
        command: name.to_string(),
        seed: common.seed,
        config: outcome.config,
        results: outcome.results,
        passed: outcome.passed,
    };
    write_outputs(&common.out, &report, &outcome.tables, start.elapsed())?;
    eprintln!(
        "{name}: {} ({:.2}s) -> {}",
        if report.passed { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        common.out.display()
    );
    Ok(report.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
