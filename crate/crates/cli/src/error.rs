use hyperdecay::error::Error as CoreError;
use thiserror::Error;

/// Failure of a subcommand, with the stage it happened in.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("error[{stage}]: {msg}")]
    Validation { stage: &'static str, msg: String },
    #[error("error[{stage}]: {msg}")]
    Certification { stage: &'static str, msg: String },
    #[error("error[{stage}]: {msg}")]
    Numerical { stage: &'static str, msg: String },
    #[error("error[io]: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn validation(stage: &'static str, msg: impl Into<String>) -> Self {
        CliError::Validation { stage, msg: msg.into() }
    }

    /// Sort a library error into the exit-code classes.
    pub fn from_core(stage: &'static str, e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidParams(_) | CoreError::InvalidSystem(_) | CoreError::InvalidGrid(_) | CoreError::Unsupported(_) => {
                CliError::Validation { stage, msg }
            }
            CoreError::Certification { stage: inner, .. } => CliError::Certification { stage: inner, msg },
            CoreError::Infeasible(_) => CliError::Certification { stage, msg },
            CoreError::EigenNoConvergence { .. }
            | CoreError::EigenAt { .. }
            | CoreError::FitWindowTooSmall { .. }
            | CoreError::NonnegativeAbscissa { .. }
            | CoreError::Numerical(_) => CliError::Numerical { stage, msg },
        }
    }

    /// Process exit status: 2 bad input, 3 a check did not pass, 4 numerical
    /// breakdown, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Certification { .. } => 3,
            CliError::Numerical { .. } => 4,
            CliError::Io(_) => 1,
        }
    }
}
