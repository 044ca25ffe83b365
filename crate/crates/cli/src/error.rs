use std::fmt;

use ibc_core::Error as CoreError;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or input files.
    Validation(String),
    /// Numerical or runtime failure, including aborted rollouts.
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Parse { .. } | CoreError::Invalid(_) => CliError::Validation(msg),
            CoreError::Io { .. } => CliError::Io(msg),
            CoreError::Contract(_)
            | CoreError::Dimension { .. }
            | CoreError::NonFinite(_)
            | CoreError::NonFiniteGradient { .. } => CliError::Runtime(msg),
        }
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = Result<T, CliError>;
