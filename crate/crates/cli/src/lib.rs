//! Command-line driver: configuration parsing, subcommand dispatch and
//! file emission.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hibler_core::verify::{run_criteria, Budget};

use crate::commands::{CliError, Outcome};
use crate::config::{parse_config, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hibler", version, about = "Viscous-plastic sea-ice model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Path to a `key = value` configuration file.
    config: PathBuf,
}

#[derive(Debug, Args)]
struct MatrixArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Also write the assembled operator as `row col value` lines.
    #[arg(long)]
    export_matrix: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-step the full system from a perturbed equilibrium.
    Simulate(MatrixArgs),
    /// Sample the principal symbol: eigenvalues and coercivity margins.
    Symbol(ConfigArg),
    /// Sample boundary probes of the complementing condition.
    LsCheck(ConfigArg),
    /// Dense spectrum of the linearisation at the equilibrium.
    Spectrum(MatrixArgs),
    /// Relaxation to equilibrium and decay-rate fit.
    Decay(ConfigArg),
    /// Run the built-in invariant suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the full sample counts instead of the quick budget.
        #[arg(long)]
        full: bool,
    },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    Ok(parse_config(&text)?)
}

fn selftest(seed: u64, full: bool) -> Outcome {
    let budget = if full { Budget::full() } else { Budget::quick() };
    let results = run_criteria(&budget, seed);
    Outcome {
        passed: results.iter().all(|c| c.passed),
        lines: results.iter().map(|c| c.to_string()).collect(),
    }
}

fn execute(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Simulate(a) => commands::simulate(&load(&a.config.config)?, a.export_matrix),
        Command::Symbol(a) => commands::symbol(&load(&a.config)?),
        Command::LsCheck(a) => commands::ls_check(&load(&a.config)?),
        Command::Spectrum(a) => commands::spectrum_cmd(&load(&a.config.config)?, a.export_matrix),
        Command::Decay(a) => commands::decay(&load(&a.config)?),
        Command::Selftest { seed, full } => Ok(selftest(seed, full)),
    }
}

/// Parses `argv`, runs the subcommand and returns the exit code: 0 on
/// success, 1 when a checked property or margin fails, 2 on usage or
/// configuration errors.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            if outcome.passed {
                0
            } else {
                eprintln!("hibler: check failed");
                1
            }
        }
        Err(e) => {
            eprintln!("hibler: {e}");
            e.exit_code()
        }
    }
}
