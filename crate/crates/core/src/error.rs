use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Effort dominates the expected loss and the optimum runs to a boundary.
    #[error("boundary optimum: {0}")]
    Boundary(String),

    #[error("no interior minimum found after {expansions} bracket expansions (last bracket [{lo:.4}, {hi:.4}] in log aim)")]
    BracketExhausted { expansions: usize, lo: f64, hi: f64 },

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("incompatible weight file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invalid weight file: {0}")]
    Weights(String),

    #[error("{0}")]
    Data(String),

    #[error("inference failed: {0}")]
    Inference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numeric failures (as opposed to invalid input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Boundary(_)
                | Error::BracketExhausted { .. }
                | Error::Overflow(_)
                | Error::Divergence { .. }
                | Error::Inference(_)
        )
    }

    /// Errors that mark a parameter setting as outside the identifiable region.
    pub fn is_boundary(&self) -> bool {
        matches!(
            self,
            Error::Boundary(_) | Error::BracketExhausted { .. } | Error::Overflow(_)
        )
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn ensure_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must be positive and finite, got {v}")))
    }
}
