use std::path::Path;

use thiserror::Error;

/// Failures of a CLI verb, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Oracle(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<fguide_core::Error> for CliError {
    fn from(e: fguide_core::Error) -> Self {
        match e {
            fguide_core::Error::Input(m) => CliError::Config(m),
            fguide_core::Error::Numeric(m) => CliError::Numeric(m),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io {
            path: "csv output".into(),
            source: std::io::Error::other(e),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
