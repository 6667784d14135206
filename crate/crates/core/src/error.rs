use thiserror::Error;

/// Errors produced by the rod and curve routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (non-orthonormal frames, bad partitions, unknown names).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A strain left the domain where the energy is defined (v3 <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Gauss-Newton projection onto the clamping manifold did not reach the tolerance.
    #[error("projection did not converge after {iterations} iterations (residual {residual:.3e})")]
    ProjectionFailed { iterations: usize, residual: f64 },

    /// The gradient flow could not produce an admissible step.
    #[error("gradient flow failed at iteration {iteration}: {reason}")]
    FlowFailed { iteration: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerical procedures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::ProjectionFailed { .. } | Error::FlowFailed { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
