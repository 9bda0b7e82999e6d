//! Command-line front end: experiment runs, parameter sweeps, the theory
//! harness, gradient checks and dataset export.
//!
//! Exit codes: 0 success, 1 a check or sub-run failed (or an I/O error),
//! 2 bad configuration, usage or missing input file, 3 training diverged.

pub mod args;
pub mod gendata;
pub mod gradcheck;
pub mod run;
pub mod sweep;
pub mod theory;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use utep_core::trainer::{ConfigError, ExperimentConfig, TrainError};

pub use args::{Cli, Command};
pub use run::{run_experiment, RunSummary};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("cannot read {path}: {msg}")]
    MissingInput { path: String, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("training diverged ({detail}); offending batch written to {dump}")]
    Diverged { detail: String, dump: String },
    #[error(transparent)]
    Train(TrainError),
    #[error("cannot write {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::MissingInput { .. } | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Diverged { .. } => EXIT_DIVERGED,
            CliError::Train(TrainError::Config(_)) | CliError::Train(TrainError::Io { .. }) => EXIT_CONFIG,
            CliError::Train(TrainError::NonFiniteMetrics(_)) => EXIT_DIVERGED,
            CliError::Train(_) | CliError::Io { .. } | CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

/// Reads a config file, or returns the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::MissingInput {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    ExperimentConfig::parse(&text).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Output directory: the flag wins over the config's `output_dir`.
pub(crate) fn output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map_or_else(|| PathBuf::from(&cfg.output_dir), Path::to_path_buf)
}

/// Logging threshold from `UTEP_LOG_LEVEL` (error, info or debug; info
/// when unset).
pub fn init_logging() {
    let level = std::env::var("UTEP_LOG_LEVEL").unwrap_or_else(|_| "info".into());
    let filter = match level.to_ascii_lowercase().as_str() {
        "error" => log::LevelFilter::Error,
        "debug" => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs a parsed command line and returns the process exit code.
pub fn dispatch(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(&a),
        Command::Sweep(a) => sweep::cmd_sweep(&a),
        Command::VerifyTheory(a) => theory::cmd_verify_theory(&a, &mut std::io::stdout()),
        Command::Gradcheck(a) => gradcheck::cmd_gradcheck(&a, &mut std::io::stdout()),
        Command::GenData(a) => gendata::cmd_gen_data(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
