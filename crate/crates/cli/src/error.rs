use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] icthp::Error),
    #[error("--stage hp requires --ict-checkpoint")]
    MissingCheckpoint,
    #[error("{0}")]
    InvalidFlags(String),
    #[error("{} is locked by another run (remove the lock file if that run is gone)", .0.display())]
    Locked(PathBuf),
    #[error("gradient check failed: max error {max_error:e} exceeds tolerance {tolerance:e}")]
    GradCheckFailed { max_error: f64, tolerance: f64 },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::MissingCheckpoint => "MISSING_CHECKPOINT",
            CliError::InvalidFlags(_) => "INVALID_FLAGS",
            CliError::Locked(_) => "LOCKED",
            CliError::GradCheckFailed { .. } => "GRAD_CHECK_FAILED",
        }
    }

    /// `error[CODE]: message` on one line.
    pub fn render(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.code())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
