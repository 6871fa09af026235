//! Command line front end.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::bench::{cmd_calibrate, cmd_compare, cmd_explore};
use super::config::{BenchmarkConfig, Overrides};
use super::report::cmd_report;
use super::HarnessError;
use crate::explorer::Variant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_BUGS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "armbench", version, about = "Simulated camera-and-arm GUI exploration bench")]
pub struct Cli {
    /// Benchmark config (JSON); every field is optional.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Run a single strategy.
    #[arg(long, global = true, value_name = "random|edge|center")]
    pub strategy: Option<Variant>,
    #[arg(long, global = true, value_name = "N")]
    pub budget_steps: Option<usize>,
    /// Simulated seconds per run.
    #[arg(long, global = true, value_name = "S")]
    pub budget_seconds: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Write perception overlays and initial frames.
    #[arg(long, global = true)]
    pub debug_overlays: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub show_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate the camera from synthetic chessboard views.
    Calibrate,
    /// Explore the app suite with every strategy and seed.
    Explore,
    /// Explore on device pairs and report crashes and compatibility bugs.
    Compare,
    /// Summarize a finished output directory.
    Report {
        /// Output directory to read; defaults to the configured one.
        dir: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command, returning the exit code. Output goes
/// to `out` and diagnostics to `err`.
pub fn run<I, T>(args: I, env: impl Fn(&str) -> Option<String>, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let overrides = Overrides {
        seed: cli.seed,
        strategy: cli.strategy,
        budget_steps: cli.budget_steps,
        budget_seconds: cli.budget_seconds,
        out: cli.out.clone(),
    };
    let cfg = match BenchmarkConfig::load(cli.config.as_deref(), env, &overrides) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    if cli.show_config {
        let _ = write!(out, "{}", cfg.to_json());
        return EXIT_OK;
    }
    match execute(&cli, &cfg, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn execute(cli: &Cli, cfg: &BenchmarkConfig, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> Result<i32, HarnessError> {
    let save_config = |cfg: &BenchmarkConfig| {
        let p = cfg.out.join("config.json");
        super::io::write_atomic(&p, cfg.to_json().as_bytes()).map_err(|e| HarnessError::Io(p, e))
    };
    match &cli.command {
        Command::Calibrate => {
            let doc = cmd_calibrate(cfg)?;
            let _ = writeln!(
                out,
                "fx {:.3} fy {:.3} cx {:.3} cy {:.3} s {:.4} k1 {:.5}",
                doc.fx, doc.fy, doc.cx, doc.cy, doc.s, doc.k1
            );
            let _ = writeln!(out, "reprojection error {:.4} px over {} views", doc.reprojection_error, doc.views);
            Ok(EXIT_OK)
        }
        Command::Explore => {
            save_config(cfg)?;
            let (summary, calibrated) = cmd_explore(cfg, cli.debug_overlays)?;
            if calibrated {
                let _ = writeln!(err, "note: no calibration found, calibrated first");
            }
            for a in &summary.strategies {
                let _ = writeln!(
                    out,
                    "{:<7} runs {:>3}  distance {:>9.1} ± {:>7.1} mm  screens {:>5.2}  crashes {}",
                    a.strategy.as_str(),
                    a.runs,
                    a.distance_mean_mm,
                    a.distance_sd_mm,
                    a.screens_visited_mean,
                    a.crashes_total
                );
            }
            Ok(EXIT_OK)
        }
        Command::Compare => {
            save_config(cfg)?;
            let summary = cmd_compare(cfg)?;
            for (pair, why) in &summary.failed_pairs {
                let _ = writeln!(err, "error: pair {pair}: {why}");
            }
            let failed_runs = summary.runs.iter().filter(|r| r.error.is_some()).count();
            if failed_runs > 0 {
                let _ = writeln!(err, "error: {failed_runs} comparison runs failed");
            }
            let crashes = summary.findings.iter().filter(|f| f.kind == crate::compat::BugKind::Crash).count();
            let _ = writeln!(
                out,
                "{} unique bugs: {} crash, {} compatibility",
                summary.bug_count(),
                crashes,
                summary.bug_count() - crashes
            );
            if !summary.failed_pairs.is_empty() || failed_runs > 0 {
                Ok(EXIT_FAILURE)
            } else if summary.bug_count() > 0 {
                Ok(EXIT_BUGS)
            } else {
                Ok(EXIT_OK)
            }
        }
        Command::Report { dir } => {
            let dir = dir.clone().unwrap_or_else(|| cfg.out.clone());
            let report = cmd_report(&dir)?;
            let _ = write!(out, "{}", report.text);
            Ok(EXIT_OK)
        }
    }
}
