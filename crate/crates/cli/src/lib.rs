//! Command-line front end for the bdsa benchmark suites.

pub mod config;
pub mod error;
pub mod plotdata;
pub mod selftest;
pub mod suites;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, ExperimentConfig, Settings, Suite};
use crate::error::{write_file, CliError, CliResult};
use crate::plotdata::{export_plotdata, TraceColumns};
use crate::suites::{run_suite, Artifacts};

#[derive(Debug, Parser)]
#[command(name = "bdsa", version, about = "Seeded benchmark suites for the boosted double-proximal subgradient solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct SuiteArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Escape study on the φ_q test family.
    Phiq(SuiteArgs),
    /// Constrained clustering, BDSA against GPPA.
    Cluster(SuiteArgs),
    /// Convex Heron problem, DSA against BDSA.
    HeronConvex(SuiteArgs),
    /// Nonconvex Heron problem, DSA against BDSA.
    HeronNonconvex(SuiteArgs),
    /// Quick end-to-end sanity checks.
    Selftest(SuiteArgs),
    /// Align trace CSVs into one columnar file for plotting.
    Plotdata {
        /// Trace CSVs; the first one supplies the λ column.
        #[arg(required = true, value_name = "TRACE")]
        traces: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn stdout_write(bytes: &[u8]) -> CliResult<()> {
    std::io::stdout()
        .write_all(bytes)
        .map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e))
}

/// Results CSV to `out` (summary beside it as `*.summary.json`) or to
/// stdout (summary to stderr); traces into the trace directory.
pub fn write_artifacts(cfg: &ExperimentConfig, artifacts: &Artifacts) -> CliResult<()> {
    if let Some(dir) = &cfg.trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, bytes) in &artifacts.traces {
            write_file(&dir.join(name), bytes)?;
        }
    }
    match &cfg.out {
        Some(path) => {
            write_file(path, &artifacts.csv)?;
            write_file(&path.with_extension("summary.json"), artifacts.summary.as_bytes())
        }
        None => {
            stdout_write(&artifacts.csv)?;
            eprint!("{}", artifacts.summary);
            Ok(())
        }
    }
}

fn run_selftest() -> CliResult<()> {
    let checks = selftest::run_checks();
    let report: String = checks.iter().map(|c| c.line() + "\n").collect();
    stdout_write(report.as_bytes())?;
    match checks.iter().filter(|c| !c.pass).count() {
        0 => Ok(()),
        failed => Err(CliError::Check(failed)),
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let (suite, args) = match cli.command {
        Command::Phiq(a) => (Suite::Phiq, a),
        Command::Cluster(a) => (Suite::Cluster, a),
        Command::HeronConvex(a) => (Suite::HeronConvex, a),
        Command::HeronNonconvex(a) => (Suite::HeronNonconvex, a),
        Command::Selftest(a) => (Suite::Selftest, a),
        Command::Plotdata { traces, out } => {
            let columns = traces.iter().map(|p| TraceColumns::load(p)).collect::<CliResult<Vec<_>>>()?;
            let bytes = export_plotdata(&columns)?;
            return match out {
                Some(path) => write_file(&path, &bytes),
                None => stdout_write(&bytes),
            };
        }
    };
    let cfg = parse_config(suite, args.config.as_deref(), args.settings)?;
    if suite == Suite::Selftest {
        return run_selftest();
    }
    let artifacts = run_suite(&cfg)?;
    write_artifacts(&cfg, &artifacts)
}
