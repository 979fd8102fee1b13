use thiserror::Error;

/// Errors produced across the library.
///
/// Variants map onto the CLI exit-code contract through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("edge list is empty")]
    EmptyInput,

    #[error("vertex {vertex} out of range (graph has {n} vertices)")]
    VertexOutOfRange { vertex: u64, n: usize },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("infeasible deadline: {0}")]
    Infeasible(String),

    #[error("resource gate: {available} cores available but at least {required} required")]
    ResourceGate { available: usize, required: usize },

    #[error("power iteration did not converge after {iterations} iterations (last L1 change {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("query {query} failed after {completed} queries of the slot completed: {message}")]
    QueryFailed {
        query: usize,
        completed: usize,
        message: String,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code: 1 usage/validation, 2 infeasible deadline, 3 resource gate.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 2,
            Error::ResourceGate { .. } => 3,
            _ => 1,
        }
    }
}
