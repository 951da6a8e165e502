use std::process::ExitCode;

/// Errors surfaced by the command layer, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flag or config value.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] metricforge::Error),

    /// Stored matrix failed the PSD check; the report was still printed.
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    /// Outputs were written but training stopped at the iteration cap.
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        use metricforge::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Argument(_)) => 2,
            CliError::Core(E::Io { .. } | E::Parse { .. }) => 3,
            CliError::Core(E::Numerical(_) | E::Resource { .. } | E::Integrity(_)) => 4,
            CliError::NotPsd { .. } => 4,
            CliError::NotConverged(_) => 5,
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
