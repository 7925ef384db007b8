use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("nonconvergence: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Core(#[from] chemostat_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// Process exit code: 2 for nonconvergence, 3 for invalid config.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::NonConvergence(_) => 2,
            CliError::Core(e) if e.is_nonconvergence() => 2,
            CliError::Core(
                chemostat_core::Error::InvalidParams(_) | chemostat_core::Error::Washout { .. },
            ) => 3,
            _ => 1,
        }
    }
}
