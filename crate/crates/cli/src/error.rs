use thiserror::Error;

/// Failures that end a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent input files.
    #[error("input error: {0}")]
    Input(String),
    /// Invalid flags or configuration, prefixed by the offending key.
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<rica::Error> for CliError {
    fn from(e: rica::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
