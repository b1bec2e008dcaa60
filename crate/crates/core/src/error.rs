use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stencil is not of positive type at node {node} (x = {x:?}): {reason}")]
    Assembly {
        node: usize,
        x: [f64; 2],
        reason: String,
    },

    #[error("time step {dt:e} violates the explicit stability bound; need dt <= {bound:e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("linear solver stopped after {iterations} iterations with relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{what} did not settle; increment history {history:?}")]
    NotSettled { what: String, history: Vec<f64> },

    #[error("adjoint null space is not one-dimensional: {0}")]
    NonUnique(String),

    #[error("grid with h = {h} does not resolve the required scale {limit}")]
    Resolution { h: f64, limit: f64 },

    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Domain(_)
            | Error::Validation(_)
            | Error::Resolution { .. }
            | Error::Cfl { .. }
            | Error::Assembly { .. } => 2,
            Error::NonConvergence { .. } | Error::NotSettled { .. } | Error::NonUnique(_) => 3,
            Error::Io(_) | Error::Json(_) | Error::Format(_) => 4,
        }
    }
}
