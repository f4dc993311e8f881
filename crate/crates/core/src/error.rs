use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("abscissa {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("non-finite function value at x = {x}")]
    FitFailure { x: f64 },

    #[error("security cap of player {player} has residual {residual:e} against its budget")]
    CapResidual { player: usize, residual: f64 },

    #[error("sampled-game solver exhausted its search budget")]
    SolverExhausted,

    #[error("time limit reached")]
    TimeLimit,

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
