use thiserror::Error;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The consumer problem is unbounded: the returned portfolio is an arbitrage.
    #[error("consumer problem is unbounded: arbitrage portfolio found (min state payoff {min_state_payoff:e})")]
    Unbounded {
        witness: Vec<f64>,
        min_state_payoff: f64,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("rank-deficient covariance on the traded set: null-space dimension {null_dim}")]
    RankDeficient { null_dim: usize },

    #[error("parameters outside the domain: {0}")]
    Domain(String),

    #[error("root not bracketed: {0}")]
    Bracket(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no usable samples: all {0} samples were discarded")]
    EmptyStatistics(usize),
}

impl Error {
    /// Residual attached to a numerical failure, if any.
    pub fn residual(&self) -> Option<f64> {
        match self {
            Error::NonConvergence { residual, .. } => Some(*residual),
            _ => None,
        }
    }

    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::IllConditioned(_)
                | Error::Bracket(_)
                | Error::RankDeficient { .. }
                | Error::Unbounded { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
