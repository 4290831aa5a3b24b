//! `btc-lab`: command-line driver for the btc-core engines.
//!
//! Every run writes into `--out` (default `out/`):
//!
//! * the command's CSV/JSON outputs,
//! * `config.json`, the fully resolved configuration (`btc-lab run --config
//!   out/config.json` repeats the run byte for byte),
//! * `result.json` with a status (`ok`, `partial`, `failed`), the list of
//!   files written and a short numeric summary.
//!
//! Exit codes: 0 on success, 2 on a usage error, 3 on a numerical failure
//! (outputs up to the failure are still written and flagged in
//! `result.json`), 1 on I/O errors.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Out, Report, Status};
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "btc-lab",
    version,
    about = "Mean-field, Gaussian and exact dynamics of dissipative spin chains"
)]
struct Cli {
    /// Worker threads for parameter sweeps. Defaults to the number of logical cores.
    #[arg(long, global = true, env = "BTC_LAB_THREADS")]
    threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, short, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    #[command(flatten)]
    Job(RunConfig),
    /// Repeat a run from an echoed `config.json`.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Bad input, reported with the configuration key at fault.
#[derive(Debug)]
pub struct UsageError {
    key: Option<String>,
    message: String,
}

impl UsageError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_owned()),
            message: message.into(),
        }
    }

    pub fn plain(message: impl Into<String>) -> Self {
        Self {
            key: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "invalid value for `{k}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(UsageError),
    Numerical(String),
    Io(std::io::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

fn load(path: &PathBuf) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(Failure::Io)?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(UsageError::plain(format!("{}: {e}", path.display()))))
}

fn execute(cli: Cli) -> Result<Report, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError::new("threads", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(std::io::Error::other(e)))?;
    }
    let mut cfg = match cli.command {
        Command::Job(cfg) => cfg,
        Command::Run { config } => load(&config)?,
    };
    cfg.resolve();
    cfg.validate()?;

    let mut out = Out::new(&cli.out).map_err(Failure::Io)?;
    out.json("config.json", &cfg)?;
    let report = match commands::run(&cfg, &mut out) {
        Ok(r) => r,
        Err(Failure::Numerical(reason)) => out.failed(cfg.name(), reason),
        Err(e) => return Err(e),
    };
    Out::new(&cli.out).map_err(Failure::Io)?.json("result.json", &report)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    match execute(cli) {
        Ok(report) => match report.status {
            Status::Ok => {
                println!("{}", out.join("result.json").display());
                ExitCode::SUCCESS
            }
            Status::Partial | Status::Failed => {
                eprintln!(
                    "btc-lab: numerical failure: {}",
                    report.reason.as_deref().unwrap_or("unknown")
                );
                eprintln!("btc-lab: outputs flagged in {}", out.join("result.json").display());
                ExitCode::from(3)
            }
        },
        Err(Failure::Usage(e)) => {
            eprintln!("btc-lab: error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("btc-lab: numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) => {
            eprintln!("btc-lab: i/o error: {e}");
            ExitCode::from(1)
        }
    }
}
