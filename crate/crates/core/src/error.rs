use thiserror::Error;

/// Errors raised by the re-ranking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch}, query {query}: {detail}")]
    TrainingDivergence {
        epoch: usize,
        query: String,
        detail: String,
    },

    #[error("linear program is infeasible (phase-one residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("simplex solver bug: {0}")]
    Solver(String),

    #[error("no permutation supported on the residual (remaining mass {remaining_mass:e}); input is not doubly stochastic")]
    NumericalRank { remaining_mass: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: query {query_id}: {message}")]
    LengthMismatch {
        line: usize,
        query_id: String,
        message: String,
    },

    #[error("duplicate query id {0:?}")]
    DuplicateQuery(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
