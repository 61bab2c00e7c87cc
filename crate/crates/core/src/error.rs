use thiserror::Error;

use crate::config::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration:\n{0}")]
    InvalidConfig(ValidationReport),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no market: aggregate demand is zero")]
    NoMarket,

    #[error("equilibrium iteration did not converge after {rounds} rounds (last step {last_step:e}); last profile {profile:?}")]
    NoConvergence {
        rounds: usize,
        last_step: f64,
        profile: Vec<f64>,
    },

    #[error("equilibrium failed verification: {0}")]
    Verification(String),

    #[error("scenario enumeration needs {required} path matrices, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("period {period}: {source}")]
    Period {
        period: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_period(self, period: usize) -> Error {
        match self {
            e @ Error::Period { .. } => e,
            e => Error::Period {
                period,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, skipping period context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Period { source, .. } => source.root(),
            e => e,
        }
    }
}
