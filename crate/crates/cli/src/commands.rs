//! The subcommands. Each returns the process exit code on success.

use std::path::{Path, PathBuf};

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{execute, replay, samples_csv, series_of, RunReport};
use crate::trace::Trace;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_report(path: &Path, report: &RunReport) -> CliResult<i32> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    write(path, &(text + "\n"))?;
    Ok(if report.verification.overall_pass {
        EXIT_PASS
    } else {
        EXIT_VERIFY_FAILED
    })
}

/// Builds, verifies and writes trace, samples and report into `out`.
/// A verify-only config replays the trace already present in `out`.
pub fn run(config: &Path, out: &Path, seedless: bool) -> CliResult<i32> {
    let cfg = RunConfig::load(config)?;
    if seedless {
        cfg.check_seedless()?;
    }
    let trace_path = out.join(&cfg.outputs.trace);
    let report_path = out.join(&cfg.outputs.report);
    if cfg.mode == Mode::VerifyOnly {
        let trace = Trace::read(&trace_path)?;
        return write_report(&report_path, &replay(&trace)?);
    }
    let result = execute(&cfg)?;
    write(&trace_path, &result.trace.to_jsonl())?;
    let csv = samples_csv(&result.series, cfg.window, cfg.grids.samples)?;
    write(&out.join(&cfg.outputs.samples), &csv)?;
    write_report(&report_path, &result.report)
}

/// Replays a trace and writes the report next to it unless `out` is given.
pub fn verify(trace_path: &Path, out: Option<&Path>) -> CliResult<i32> {
    let trace = Trace::read(trace_path)?;
    let report = replay(&trace)?;
    let target: PathBuf = match out {
        Some(p) => p.to_path_buf(),
        None => trace_path.with_file_name(&trace.header.config.outputs.report),
    };
    write_report(&target, &report)
}

/// Writes `x,f,f_prime` rows of the recorded series. Window and row count
/// default to those of the recorded config.
pub fn export_samples(trace_path: &Path, out: &Path, window: Option<f64>, count: Option<usize>) -> CliResult<i32> {
    let trace = Trace::read(trace_path)?;
    let cfg = &trace.header.config;
    let window = window.unwrap_or(cfg.window);
    let count = count.unwrap_or(cfg.grids.samples);
    if !(window > 0.0 && window.is_finite()) || count < 2 {
        return Err(CliError::Schema("export needs a positive window and at least 2 rows".into()));
    }
    let series = series_of(&trace)?;
    write(out, &samples_csv(&series, window, count)?)?;
    Ok(EXIT_PASS)
}
