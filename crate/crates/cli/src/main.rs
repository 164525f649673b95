//! Command-line front end: `run`, `check`, `rate`, and `sweep` over a flat
//! dotted-key config file, with flags overriding individual config keys.
//!
//! Exit codes: 0 on success (and all requested checks passing), 1 when a
//! check fails its declared thresholds, 2 for configuration errors, 3 for
//! execution or I/O failures.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use saddlelab::commands::{command_check, command_rate, command_run, command_sweep, CommandError};
use saddlelab::config::RunConfigDocument;

#[derive(Parser)]
#[command(
    name = "saddlelab",
    about = "Stochastic gradient methods on saddle landscapes: Monte Carlo runs, assumption checks, decay-rate fits, and parameter sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trial count (overrides `trials`).
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed (overrides `experiment.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks the default pool (overrides `parallelism`).
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment and write report.json, summary.csv,
    /// and per-trial CSVs.
    Run(CommonArgs),
    /// Probe the smoothness/noise assumptions and write assumptions.json;
    /// exits nonzero if any verdict fails.
    Check(CommonArgs),
    /// Run trials and write the binned velocity envelope with its fitted
    /// decay line as rate.csv.
    Rate(CommonArgs),
    /// Repeat `run` across a list of values for one config key.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Dotted config key to sweep, e.g. `method.beta`.
        #[arg(long)]
        key: String,
        /// Comma-separated values for the key.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

fn load_config(common: &CommonArgs) -> Result<(RunConfigDocument, PathBuf), String> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| format!("cannot read {}: {e}", common.config.display()))?;
    let mut doc = RunConfigDocument::parse(&text).map_err(|e| e.to_string())?;
    if let Some(trials) = common.trials {
        doc.apply_kv("trials", &trials.to_string())
            .map_err(|e| e.to_string())?;
    }
    if let Some(seed) = common.seed {
        doc.apply_kv("experiment.seed", &seed.to_string())
            .map_err(|e| e.to_string())?;
    }
    if let Some(parallelism) = common.parallelism {
        doc.apply_kv("parallelism", &parallelism.to_string())
            .map_err(|e| e.to_string())?;
    }
    if let Some(out) = &common.out {
        doc.apply_kv("output.dir", &out.display().to_string())
            .map_err(|e| e.to_string())?;
    }
    doc.build().map_err(|e| e.to_string())?;
    let out_dir = PathBuf::from(&doc.output_dir);
    Ok((doc, out_dir))
}

fn exit_code_for(err: &CommandError) -> u8 {
    match err {
        CommandError::Config(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run(c) | Command::Check(c) | Command::Rate(c) => c,
        Command::Sweep { common, .. } => common,
    };
    let (doc, out_dir) = match load_config(common) {
        Ok(v) => v,
        Err(message) => {
            eprintln!("config error: {message}");
            return ExitCode::from(2);
        }
    };

    let outcome = match &cli.command {
        Command::Run(_) => command_run(&doc, &out_dir).map(|report| {
            println!(
                "trials {}: saddle {} minimum {} diverged {} unresolved {} (wilson upper {})",
                report.trials,
                report.saddle_count,
                report.minimum_count,
                report.diverged_count,
                report.unresolved_count,
                report.saddle_wilson_upper
            );
            true
        }),
        Command::Check(_) => command_check(&doc, &out_dir).map(|report| {
            println!(
                "verdicts: smoothness {} nonflatness {} abc {} local_bound {} excitation {}",
                report.verdicts.smoothness,
                report.verdicts.nonflatness,
                report.verdicts.abc,
                report.verdicts.local_bound,
                report.verdicts.excitation
            );
            report.verdicts.all_pass()
        }),
        Command::Rate(_) => command_rate(&doc, &out_dir).map(|fit| {
            println!(
                "velocity envelope slope {} (stderr {}), {} bins",
                fit.slope,
                fit.stderr,
                fit.bins.len()
            );
            true
        }),
        Command::Sweep { key, values, .. } => {
            command_sweep(&doc, key, values, &out_dir).map(|rows| {
                for row in &rows {
                    println!(
                        "{key} = {}: saddle fraction {}",
                        row.value, row.report.saddle_fraction
                    );
                }
                true
            })
        }
    };

    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
