//! `pqbackbone`: bound tables, protocol simulations and recording-oracle
//! verification from flat config files.
//!
//! Exit codes: 0 success, 1 property or acceptance violation, 2 invalid
//! configuration, 3 resource limit or I/O failure.

mod bounds_cmd;
mod compare_cmd;
mod config;
mod output;
mod simulate_cmd;
mod verify_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use config::KvConfig;

/// Bumped whenever a CSV column or JSON field changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

/// Every flag can also be set through `PQBACKBONE_<FLAG>` or as a key of
/// the config file; flags win over the environment, which wins over the file.
#[derive(Debug, Parser)]
#[command(name = "pqbackbone", version, about)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, env = "PQBACKBONE_CONFIG")]
    config: Option<PathBuf>,
    /// Extra `KEY=VALUE` assignment applied on top of the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true, env = "PQBACKBONE_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "PQBACKBONE_TRIALS")]
    trials: Option<u32>,
    /// Worker threads; never changes any emitted value.
    #[arg(long, global = true, env = "PQBACKBONE_JOBS")]
    jobs: Option<usize>,
    /// Output file for the machine-readable report (stdout if absent).
    #[arg(long, global = true, env = "PQBACKBONE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "PQBACKBONE_FORMAT")]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Evaluate the query bounds over a parameter grid.
    Bounds,
    /// Classical vs quantum adversary comparison and per-k bound table.
    Compare,
    /// Monte Carlo protocol executions with property checks.
    Simulate,
    /// Numerical verification of the recording-oracle lemmas.
    VerifyOracle,
}

/// Settings shared by all commands after merging flags, env and file.
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub trials: u32,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

/// What a command produced: the machine-readable document, a human summary
/// for stderr and whether every checked property held.
pub struct Outcome {
    pub body: String,
    pub summary: String,
    pub passed: bool,
}

fn load(cli: &Cli) -> Result<(KvConfig, Globals), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            KvConfig::parse(&text)?
        }
        None => KvConfig::default(),
    };
    for s in &cli.set {
        cfg.set(s)?;
    }
    let seed = cfg.parsed("seed")?;
    let trials = cfg.parsed("trials")?;
    let jobs = cfg.parsed("jobs")?;
    let out = cfg.string("out").map(PathBuf::from);
    let format = cfg.parsed("format")?;
    let globals = Globals {
        seed: cli.seed.or(seed).unwrap_or(0),
        trials: cli.trials.or(trials).unwrap_or(10),
        jobs: cli.jobs.or(jobs).unwrap_or(1).max(1),
        out: cli.out.clone().or(out),
        format: cli.format.or(format),
    };
    Ok((cfg, globals))
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let (cfg, globals) = load(cli)?;
    let outcome = match cli.command {
        Command::Bounds => bounds_cmd::run(cfg, &globals)?,
        Command::Compare => compare_cmd::run(cfg, &globals)?,
        Command::Simulate => simulate_cmd::run(cfg, &globals)?,
        Command::VerifyOracle => verify_cmd::run(cfg, &globals)?,
    };
    output::emit(&globals, &outcome.body)?;
    eprint!("{}", outcome.summary);
    eprintln!(
        "report sha256: {}",
        output::sha256_hex(outcome.body.as_bytes())
    );
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
