//! Command-line driver: configuration, scans, CSV tables and the manifest.
//!
//! Exit codes: 0 success, 2 configuration or parameter error, 3 numerical
//! nonconvergence, 4 invariant violation detected at runtime, 1 I/O failure.

mod commands;
pub mod config;
pub mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

pub use config::{parse_config, Grid, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "kmsbec", version, about = "Finite-temperature condensate numerics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: the config's out_dir, else out/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized suites; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// ω± over the momentum grid.
    Dispersion,
    /// Thermal observables over the β grid.
    ThermalScan,
    /// Critical temperature for a target charge density.
    TcSolve,
    /// Charge commutator, spectral check and current divergence.
    Goldstone,
    /// Graph enumeration and the cumulant-oracle cross-check.
    Graphs,
    /// Hadamard coefficient tables and the transport residual ladder.
    HadamardCheck,
    /// Spatial decay rates of the imaginary-time kernel.
    DecayFit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Dispersion => "dispersion",
            Command::ThermalScan => "thermal-scan",
            Command::TcSolve => "tc-solve",
            Command::Goldstone => "goldstone",
            Command::Graphs => "graphs",
            Command::HadamardCheck => "hadamard-check",
            Command::DecayFit => "decay-fit",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] crate::Error),
    #[error("{0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(e) if e.is_nonconvergence() => 3,
            CliError::Numerical(crate::Error::Invariant(_)) | CliError::Invariant(_) => 4,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "nonconvergence",
            4 => "invariant",
            _ => "io",
        }
    }
}

fn error_record(command: &str, err: &CliError) -> String {
    serde_json::json!({
        "command": command,
        "exit_code": err.exit_code(),
        "kind": err.kind(),
        "message": err.to_string(),
    })
    .to_string()
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let command = cli.command.name();
    let loaded = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))
        .and_then(|p| {
            std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))
        })
        .and_then(|text| parse_config(&text).map_err(CliError::Config));
    let mut cfg = match loaded {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", error_record(command, &e));
            if let Some(dir) = &cli.out {
                let _ = std::fs::create_dir_all(dir);
                let _ = output::write_atomic(&dir.join("error.json"), error_record(command, &e).as_bytes());
            }
            return e.exit_code();
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(command));
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            let e = CliError::Config(format!("cannot start {threads} threads: {e}"));
            eprintln!("{}", error_record(command, &e));
            return e.exit_code();
        }
    };
    let hashed = RunConfig { out_dir: None, ..cfg.clone() };
    let mut out = match output::OutputDir::create(
        &dir,
        command,
        output::hash_config(&hashed),
        cfg.seed,
        pool.current_num_threads(),
    ) {
        Ok(o) => o,
        Err(e) => {
            let e = CliError::Io(e);
            eprintln!("{}", error_record(command, &e));
            return e.exit_code();
        }
    };
    let result = pool.install(|| commands::dispatch(cli.command, &cfg, &mut out)).and_then(|()| {
        out.finish()?;
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_record(command, &e));
            let _ = out.fail(e.exit_code(), e.kind(), &e.to_string());
            e.exit_code()
        }
    }
}
