//! The four operations behind the CLI subcommands, writing their artifacts
//! into an output directory.
//!
//! * `run`   → `report.json`, `summary.csv`, and one `trial_<k>.csv` per trial
//! * `check` → `assumptions.json`
//! * `rate`  → `rate.csv`
//! * `sweep` → one run subdirectory per value plus `sweep.csv`
//!
//! JSON documents are UTF-8 with lexicographically sorted keys; the wall
//! clock appears in exactly one top-level `timestamp` field so determinism
//! comparisons can exclude a single path. CSV output is comma-separated,
//! one header row, LF line endings, with numbers in shortest round-trip
//! decimal form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::assumptions::{run_assumption_report, AssumptionReport, AssumptionsError};
use crate::config::{ConfigError, RunConfigDocument};
use crate::experiment::{
    fit_velocity_rate_pooled, run_monte_carlo, EscapeReport, ExperimentError, RateFit, Terminal,
    TrialResult,
};
use crate::landscape::CriticalComponent;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Assumptions(#[from] AssumptionsError),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CommandError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn json_document(
    doc: &RunConfigDocument,
    body_key: &str,
    body: serde_json::Value,
) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    map.insert("config".to_string(), doc.to_json());
    map.insert(body_key.to_string(), body);
    map.insert("seed".to_string(), serde_json::json!(doc.seed));
    map.insert("timestamp".to_string(), serde_json::json!(unix_timestamp()));
    serde_json::Value::Object(map)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CommandError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization");
    text.push('\n');
    write_file(path, &text)
}

/// Runs the configured Monte Carlo experiment and writes `report.json`,
/// `summary.csv`, and per-trial CSVs into `out_dir`.
pub fn command_run(
    doc: &RunConfigDocument,
    out_dir: &Path,
) -> Result<EscapeReport, CommandError> {
    let built = doc.build()?;
    let run = run_monte_carlo(&built.trial, built.trials, built.parallelism)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let report_value = serde_json::to_value(&run.report).expect("report to JSON");
    write_json(&out_dir.join("report.json"), &json_document(doc, "report", report_value))?;

    let components = built.objective.critical_components();
    write_file(&out_dir.join("summary.csv"), &summary_csv(&run.results, components))?;
    for result in &run.results {
        write_file(
            &out_dir.join(format!("trial_{}.csv", result.trial_index)),
            &trial_csv(result, components, built.objective.dim()),
        )?;
    }
    Ok(run.report)
}

/// Runs the assumption probes and writes `assumptions.json`. The caller
/// decides the exit status from `report.verdicts`.
pub fn command_check(
    doc: &RunConfigDocument,
    out_dir: &Path,
) -> Result<AssumptionReport, CommandError> {
    let built = doc.build()?;
    let report = run_assumption_report(&built.trial.oracle, &built.probe, &built.probe_settings)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let body = serde_json::to_value(&report).expect("assumption report to JSON");
    write_json(
        &out_dir.join("assumptions.json"),
        &json_document(doc, "assumptions", body),
    )?;
    Ok(report)
}

/// Runs the experiment and writes the binned velocity envelope with its
/// fitted line as `rate.csv`.
pub fn command_rate(doc: &RunConfigDocument, out_dir: &Path) -> Result<RateFit, CommandError> {
    let built = doc.build()?;
    let run = run_monte_carlo(&built.trial, built.trials, built.parallelism)?;
    let fit = fit_velocity_rate_pooled(&run.results, built.rate_tail_fraction)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut csv = String::from("bin_center_n,max_v_norm,fitted_v_norm\n");
    for &(center, max_v) in &fit.bins {
        let _ = writeln!(csv, "{center},{max_v},{}", fit.predict(center));
    }
    write_file(&out_dir.join("rate.csv"), &csv)?;
    Ok(fit)
}

/// One row of a sweep: the overridden value and the escape outcome under it.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub report: EscapeReport,
}

/// Repeats `run` across the values of one config key, writing each run into
/// its own subdirectory and collecting `sweep.csv` of saddle fractions.
pub fn command_sweep(
    doc: &RunConfigDocument,
    key: &str,
    values: &[String],
    out_dir: &Path,
) -> Result<Vec<SweepRow>, CommandError> {
    let mut rows = Vec::with_capacity(values.len());
    let stem = key.rsplit('.').next().unwrap_or(key);
    for value in values {
        let mut swept = doc.clone();
        swept.apply_kv(key, value)?;
        let subdir = out_dir.join(format!("{stem}_{value}"));
        let report = command_run(&swept, &subdir)?;
        rows.push(SweepRow {
            value: value.clone(),
            report,
        });
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut csv = String::from(
        "value,trials,saddle_count,minimum_count,diverged_count,saddle_fraction,wilson_lower,wilson_upper\n",
    );
    for row in &rows {
        let r = &row.report;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.value,
            r.trials,
            r.saddle_count,
            r.minimum_count,
            r.diverged_count,
            r.saddle_fraction,
            r.saddle_wilson_lower,
            r.saddle_wilson_upper
        );
    }
    write_file(&out_dir.join("sweep.csv"), &csv)?;
    Ok(rows)
}

fn summary_csv(results: &[TrialResult], components: &[CriticalComponent]) -> String {
    let mut out = String::from(
        "trial,classification,component,final_grad_norm,final_v_norm,diverged_at\n",
    );
    for r in results {
        let (class, comp) = match r.classification {
            Terminal::SaddleComponent(k) => ("saddle", components[k].label.as_str()),
            Terminal::MinimumComponent(k) => ("minimum", components[k].label.as_str()),
            Terminal::Diverged => ("diverged", ""),
            Terminal::Unresolved => ("unresolved", ""),
        };
        let diverged = r.diverged_at.map(|n| n.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.trial_index, class, comp, r.final_grad_norm, r.final_v_norm, diverged
        );
    }
    out
}

fn trial_csv(result: &TrialResult, components: &[CriticalComponent], dim: usize) -> String {
    let mut header = String::from("n");
    for i in 1..=dim {
        let _ = write!(header, ",x_{i}");
    }
    header.push_str(",f,grad_norm,v_norm");
    for c in components {
        let _ = write!(header, ",dist_{}", c.label);
    }
    header.push_str(",M_norm\n");

    let mut out = header;
    for row in &result.rows {
        let _ = write!(out, "{}", row.n);
        for x in &row.x {
            let _ = write!(out, ",{x}");
        }
        let _ = write!(out, ",{},{},{}", row.f, row.grad_norm, row.v_norm);
        for d in &row.component_distances {
            let _ = write!(out, ",{d}");
        }
        let _ = writeln!(out, ",{}", row.martingale_norm);
    }
    out
}
