//! Command-line front end. Every command resolves a [`RunConfig`], creates
//! a fresh run directory, stores the resolved configuration there and then
//! writes its data files. Re-running with that configuration reproduces the
//! data files byte for byte at any thread count.

pub mod args;
mod commands;
pub mod config;
mod rundir;

use std::io;
use std::path::{Path, PathBuf};

use mtj_codesign::optimizer::OptimizerError;
use mtj_codesign::target::TargetError;
use mtj_codesign::DeviceError;
use thiserror::Error;

pub use args::{Analysis, Cli, Command};
pub use config::{ConfigError, RunConfig};
pub use rundir::RunDir;

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot create run directory {path}: {source}")]
    RunDir { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    /// The configuration ran but cannot serve as a coin.
    #[error("{0}")]
    Unusable(String),
    #[error("{0}")]
    Usage(String),
}

/// Resolve the configuration, create the run directory and run the
/// command. Returns the run directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::resolve(cli.global.config.as_deref(), &cli.overrides())?;
    precheck(&cfg, &cli.command)?;
    let root = cli.global.out_root.clone().or_else(|| cfg.output_root.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    let dir = RunDir::create(cli.global.out.as_deref(), &root, cli.command.name())?;
    dir.write(RESOLVED_CONFIG, &cfg.to_toml())?;
    match &cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg, &dir)?,
        Command::Scurve { .. } => commands::scurve(&cfg, &dir)?,
        Command::Sample { .. } => commands::sample(&cfg, &dir)?,
        Command::Optimize { .. } => commands::optimize(&cfg, &dir)?,
        Command::Analyze { what, archive } => commands::analyze(&cfg, &dir, *what, archive.as_deref())?,
        Command::ParticleGamma { .. } => commands::particle_gamma(&cfg, &dir)?,
    }
    Ok(dir.path().to_path_buf())
}

/// Command-specific requirements, checked before the run directory exists.
fn precheck(cfg: &RunConfig, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Analyze { what: Analysis::Temperature, .. } if cfg.device != mtj_codesign::DeviceKind::Stt => {
            Err(CliError::Usage("the temperature analysis calibrates an STT coin; pass --device stt".into()))
        }
        Command::Analyze { what: Analysis::Archive, archive: None } => {
            Err(CliError::Usage("analyze archive needs --archive <path>".into()))
        }
        _ => Ok(()),
    }
}

/// `path` itself if it is a file, else `path/archive.jsonl`.
pub fn archive_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("archive.jsonl")
    } else {
        path.to_path_buf()
    }
}
