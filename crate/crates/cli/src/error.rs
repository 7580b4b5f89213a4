use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] subtrace::Error),
    /// The command finished with partial outputs.
    #[error("{0}")]
    Stall(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Data(subtrace::Error::InvalidArgument(_)) => ExitCode::from(2),
            CliError::Data(_) => ExitCode::from(3),
            CliError::Stall(_) => ExitCode::from(4),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
