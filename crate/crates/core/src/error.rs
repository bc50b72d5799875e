use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel is not positive semidefinite: eigenvalue {eigenvalue:e} below tolerance {tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("SGD iterate diverged at step {step}: max |Δθ| = {magnitude:e}")]
    Diverged { step: usize, magnitude: f64 },

    #[error("time index {index} was not recorded (record_stride {stride} too coarse)")]
    MissingState { index: usize, stride: usize },

    #[error("time {s} is outside the solution range [0, {tau}]")]
    OutOfRange { s: f64, tau: f64 },

    #[error("Euler-Maruyama step {dt} exceeds stability limit {limit}")]
    UnstableStep { dt: f64, limit: f64 },

    #[error("Picard iteration did not converge after {iterations} iterations (last change {last_change:e}, contraction ratio {ratio})")]
    PicardNotConverged {
        iterations: usize,
        last_change: f64,
        ratio: f64,
    },

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("sweep aborted: {diverged} of {total} replications diverged")]
    TooManyDiverged { diverged: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::OutOfRange { .. }
                | Error::UnstableStep { .. }
                | Error::Regime(_)
                | Error::Config(_)
                | Error::NotPsd { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
