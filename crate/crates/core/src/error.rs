use thiserror::Error;

/// Errors produced anywhere in the CKM construction and planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("scene too dense: placed {placed} of {requested} buildings in {attempts} attempts")]
    SceneTooDense { placed: usize, requested: usize, attempts: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("missing cached state: {0}")]
    MissingCache(&'static str),

    #[error("training diverged at epoch {epoch}: loss {loss:.3e} exceeds 10x initial {initial:.3e}")]
    Divergence { epoch: usize, loss: f64, initial: f64 },

    #[error("infeasible: {}", .0.join("; "))]
    Infeasible(Vec<String>),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownName { kind: &'static str, name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
