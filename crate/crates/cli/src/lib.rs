//! Scenario runner: configuration, execution and output of the simulator's
//! reference experiments.

pub mod config;
pub mod output;
pub mod scenarios;

use std::path::PathBuf;

pub use config::{parse_config, validate_config, NoiseSpec, Scenario, ScenarioConfig};
pub use output::{Check, RunSummary, Summary};
pub use scenarios::run_scenario;

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const ACCEPTANCE_FAIL: i32 = 1;
    pub const CONFIG_ERROR: i32 = 2;
    pub const RUNTIME_ERROR: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(spinqubit::Error),
}

impl CliError {
    pub fn config(field: impl AsRef<str>, message: impl AsRef<str>) -> Self {
        CliError::Config(format!("`{}`: {}", field.as_ref(), message.as_ref()))
    }

    /// Configuration errors from the library keep their field path.
    pub fn from_core(e: spinqubit::Error) -> Self {
        match e {
            spinqubit::Error::Config { field, message } => CliError::config(field, message),
            other => CliError::Core(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG_ERROR,
            CliError::Io { .. } | CliError::Core(_) => exit::RUNTIME_ERROR,
        }
    }
}

impl From<spinqubit::Error> for CliError {
    fn from(e: spinqubit::Error) -> Self {
        CliError::Core(e)
    }
}
