use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),

    #[error("Newton iteration did not converge within {iterations} iterations (residual norm {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("full-order solve failed at time index {step}: {source}")]
    FomStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("kernel matrix is ill-conditioned: Cholesky failed with jitter up to {jitter:e}")]
    IllConditionedKernel { jitter: f64 },

    #[error("Gaussian process fit failed for coefficient ({row}, {col}): {source}")]
    CoefficientFit {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("latent integration diverged at step {step}")]
    LatentDivergence { step: usize },

    #[error("{diverged} of {total} coefficient samples diverged")]
    TooManyDivergedSamples { diverged: usize, total: usize },

    #[error("ground-truth snapshot at time index {0} has zero norm")]
    ZeroNormSnapshot(usize),

    #[error("no unsampled parameter left in the grid")]
    GridExhausted,

    #[error("non-finite training loss at epoch {0}")]
    NonFiniteLoss(usize),

    #[error("malformed tensor file: {0}")]
    TensorFormat(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Shape(_)
                | Error::DegenerateParameter(_)
                | Error::TensorFormat(_)
                | Error::Checkpoint(_)
                | Error::Io { .. }
        )
    }
}
