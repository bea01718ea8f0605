//! Command-line driver: config ingestion, pipeline orchestration and field export.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use commands::{analyze, compare, evolve_fg, evolve_ref, spectrum, Comparison, Manifest, Run};
pub use config::{Format, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ds2aw", version, about = "Finite-gap anomalous waves of the doubly-periodic DS2 equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `outputs.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Field file format; overrides `outputs.format`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Reserved; no stage is stochastic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "DS2AW_THREADS", default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Mode table and genericity report.
    Analyze,
    /// Spectral data with diagnostics.
    Spectrum,
    /// Finite-gap field at the configured times.
    EvolveFg,
    /// Pseudo-spectral reference field at the configured times.
    EvolveRef,
    /// Error metrics of one run against a reference run.
    Compare { run: PathBuf, reference: PathBuf },
}

fn load(cli: &Cli) -> Result<Run, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Input("--config is required".into()))?;
    Run::load(path)
}

fn emit<T: Serialize>(out: &mut Vec<u8>, value: &T, file: Option<PathBuf>) -> Result<(), CliError> {
    if let Some(path) = file {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        commands::write_json(&path, value)?;
    }
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::io("<stdout>", e.into()))?;
    writeln!(out).map_err(|e| CliError::io("<stdout>", e))
}

fn report_file(cli: &Cli, name: &str) -> Option<PathBuf> {
    cli.out.as_ref().map(|d| d.join(name))
}

fn dispatch(cli: &Cli, out: &mut Vec<u8>) -> Result<(), CliError> {
    match &cli.command {
        Command::Analyze => {
            let report = analyze(&load(cli)?)?;
            emit(out, &report, report_file(cli, "analyze.json"))?;
            if !report.genericity.ok {
                return Err(CliError::Genericity(Box::new(report.genericity)));
            }
            Ok(())
        }
        Command::Spectrum => emit(out, &spectrum(&load(cli)?)?, report_file(cli, "spectrum.json")),
        Command::EvolveFg | Command::EvolveRef => {
            let run = load(cli)?;
            let dir = cli.out.clone().unwrap_or_else(|| run.output_dir());
            let format = cli.format.unwrap_or(run.config.outputs.format);
            let manifest = if matches!(cli.command, Command::EvolveFg) {
                evolve_fg(&run, &dir, format)?
            } else {
                evolve_ref(&run, &dir, format)?
            };
            emit(out, &manifest, None)
        }
        Command::Compare { run, reference } => emit(out, &compare(run, reference)?, report_file(cli, "compare.json")),
    }
}

/// Runs one subcommand, writing its JSON result to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Numeric(format!("thread pool: {e}")))?;
    let mut buf = Vec::new();
    let res = pool.install(|| dispatch(cli, &mut buf));
    out.write_all(&buf).map_err(|e| CliError::io("<stdout>", e))?;
    res
}

/// Parses `args` and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_CONFIG } else { 0 };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            e.exit_code()
        }
    }
}
