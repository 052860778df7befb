use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("input matrix is all zero")]
    ZeroMatrix,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid group: {0}")]
    Validation(String),
    #[error("unknown irrep id {0}")]
    UnknownIrrep(usize),
    #[error("no irrep catalog for group {0}")]
    NoCatalog(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("ambiguous monotonicity of sigma'(x)/x for {0}")]
    AmbiguousMonotonicity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
