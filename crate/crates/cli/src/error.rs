use thiserror::Error;

/// Errors surfaced by the commands, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration, malformed inputs.
    #[error("{0}")]
    Usage(String),
    /// The run itself failed (divergence, I/O while writing results).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<owadapt::Error> for CliError {
    fn from(e: owadapt::Error) -> Self {
        use owadapt::Error as E;
        match e {
            E::Diverged { .. } | E::Io(_) => CliError::Runtime(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

pub(crate) fn io_err(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}
