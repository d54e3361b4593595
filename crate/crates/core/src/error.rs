use thiserror::Error;

/// Errors produced by the toolbox.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected input length {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("training diverged at epoch {epoch}: risk = {risk}")]
    Divergence { epoch: usize, risk: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parameter count {m} exceeds the dense Hessian cap {cap}")]
    CapExceeded { m: usize, cap: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or config).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence(_)
                | Error::Divergence { .. }
                | Error::SingularSystem(_)
                | Error::CapExceeded { .. }
                | Error::Undefined(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
