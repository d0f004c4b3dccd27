//! Fit, predict and diagnose runs for the `aims-gp` command-line tool.

pub mod artifacts;
pub mod commands;
pub mod config;

pub use commands::{cmd_demo, cmd_diagnose, cmd_fit, cmd_predict, FitOutcome, PredictOutcome};
pub use config::RunConfig;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, flags, dataset or missing artifacts.
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] aims_gp::Error),

    /// Artifacts were written but the sampler hit its floor or level limit.
    #[error("sampler stopped without converging ({0})")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Core(_) => 2,
            CliError::NotConverged(_) => 3,
        }
    }
}
