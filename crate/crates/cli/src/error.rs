use std::path::PathBuf;

use thiserror::Error;

/// Failure of a CLI command, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing {what}: {} ({hint})", path.display())]
    Missing { what: String, path: PathBuf, hint: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Missing { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn missing(what: &str, path: PathBuf, hint: &str) -> Self {
        CliError::Missing {
            what: what.to_string(),
            path,
            hint: hint.to_string(),
        }
    }
}

impl From<transdist::Error> for CliError {
    fn from(e: transdist::Error) -> Self {
        use transdist::Error as E;
        match e {
            E::InvalidArgument(msg) => CliError::Config(msg),
            E::NumericalFailure { iteration, detail } => {
                CliError::Numerical(format!("iteration {iteration}: {detail}"))
            }
            E::Pair { index, source } => match CliError::from(*source) {
                CliError::Numerical(msg) => CliError::Numerical(format!("pair {index}: {msg}")),
                other => other,
            },
            E::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => CliError::Missing {
                what: "file".into(),
                path,
                hint: source.to_string(),
            },
            other => CliError::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
