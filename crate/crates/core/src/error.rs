use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("matrix is not skew-symmetric (symmetric part {0:.3e})")]
    NotSkew(f64),
    #[error("matrix is not a rotation (orthonormality error {orth:.3e}, det {det})")]
    NotRotation { orth: f64, det: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cholesky factorization failed even with jitter {jitter:.3e}")]
    IllConditioned { jitter: f64 },
    #[error("no hyperparameter start produced a factorizable covariance")]
    Unfittable,
    #[error("degenerate pseudo-trig prediction: |(s, c)| = {norm:.3e}")]
    DegeneratePrediction { norm: f64 },
    #[error("NaN encountered at epoch {epoch}")]
    NumericalFailure { epoch: usize },
    #[error("data error in {path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
