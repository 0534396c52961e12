use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported curve model: {0}")]
    UnsupportedModel(String),

    #[error(
        "polynomial is not squarefree: minimum root separation {separation:.3e} is below tolerance {tolerance:.3e}"
    )]
    RepeatedRoots { separation: f64, tolerance: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point outside chart domain: {0}")]
    Domain(String),

    #[error("quadrature resolution too small: {0}")]
    Resolution(String),

    #[error("non-finite density sample at node {node}")]
    NonFinite { node: usize },

    #[error("all sections vanish at node {node}; the linear system has a base point there")]
    BasePoint { node: usize },

    #[error("Gram matrix at level {level} is not numerically positive definite; increase the quadrature resolution")]
    GramIndefinite { level: u32 },

    #[error("invariant violated at level {level}: {message}")]
    Invariant { level: u32, message: String },

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}
