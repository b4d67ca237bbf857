use thiserror::Error;

use crate::network::Mlp;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("quantifier singularity at r = {at:.6} (alpha = {alpha})")]
    Singularity { alpha: f64, at: f64 },

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    /// Raised only if a supported quantifier produces a decreasing step,
    /// which would indicate a bug rather than bad input.
    #[error("internal error: negative raw OWA weight {value} at position {position}")]
    NegativeWeight { position: usize, value: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged {
        step: usize,
        loss: f64,
        params: Box<Mlp>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
