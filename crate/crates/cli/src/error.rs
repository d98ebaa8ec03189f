use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input {}: {reason}", path.display())]
    MissingInput { path: PathBuf, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] proboost::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit code: 2 for missing input, 3 for a bad configuration,
    /// 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput { .. } => 2,
            CliError::InvalidConfig(_) => 3,
            CliError::Core(
                proboost::Error::InvalidParameter(_) | proboost::Error::UnsupportedConfiguration(_),
            ) => 3,
            CliError::Core(proboost::Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CliError::InvalidConfig(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

/// Fails with exit code 2 unless `path` exists.
pub(crate) fn require(path: &std::path::Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput {
            path: path.to_path_buf(),
            reason: format!("{what} not found"),
        })
    }
}
