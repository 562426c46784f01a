use thiserror::Error;

/// Errors raised by the laboratory. Each variant maps onto one class of
/// failure the command line reports with its own exit code.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,

    #[error("cannot parse rational {0:?}")]
    Parse(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),

    #[error("stage {stage}: height {height} exceeds the memory budget of {limit} levels")]
    BudgetExceeded {
        stage: usize,
        height: u64,
        limit: u64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("construction bug: {0}")]
    ConstructionBug(String),

    #[error("invalid snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for a precondition failure.
pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
