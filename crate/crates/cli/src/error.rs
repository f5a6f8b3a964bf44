use std::path::PathBuf;

/// Errors surfaced by the command-line driver, each with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Numerical(#[from] paramosc_core::Error),

    #[error("validation failed: {0}")]
    ValidationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use paramosc_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Numerical(E::InvalidParameter { .. } | E::Config { .. }) => 2,
            CliError::Numerical(_) | CliError::ValidationFailed(_) => 3,
        }
    }
}
