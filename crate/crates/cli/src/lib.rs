//! Experiment driver: build models, run estimators, compare against the
//! dense oracle and time the partition loop.

pub mod commands;
pub mod config;

use gmrf::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 1 for numerical failures, 2 for usage, configuration and input errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::NotPositiveDefinite { .. }
                | Error::IncompleteBreakdown { .. }
                | Error::ZeroDiagonal(_)
                | Error::Indefinite(_)
                | Error::NotConverged(_)
                | Error::Numerical(_)
                | Error::InterfaceTooLarge { .. }
                | Error::RecursionDepth(_) => 1,
                _ => 2,
            },
        }
    }
}
