use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] srsm::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn missing(path: impl Into<PathBuf>) -> Self {
        CliError::Core(srsm::Error::MissingInput(path.into()))
    }

    /// Process exit code: 2 config, 3 missing input, 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                srsm::Error::InvalidParam(_) => 2,
                srsm::Error::MissingInput(_) => 3,
                e if e.is_numerical() => 4,
                _ => 1,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(srsm::Error::Io(e))
    }
}
