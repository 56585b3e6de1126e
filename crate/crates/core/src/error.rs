use thiserror::Error;

/// Errors raised by the metric, kernel, disk-optimisation and flow routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("metric degenerate at {0}")]
    MetricDegenerate(String),

    #[error("insufficient regularity radius: boundary distance {distance:.3e} < required {required:.3e}")]
    InsufficientRegularity { distance: f64, required: f64 },

    #[error("point {point} lies outside {domain}")]
    ExteriorPoint { point: String, domain: String },

    #[error("empty sample list")]
    EmptySamples,

    #[error("quadrature budget too small for degree: {0}")]
    QuadratureBudget(String),

    #[error("kernel vanishes; Bergman metric undefined (b = {0:e})")]
    KernelVanishes(f64),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("Kobayashi bracket inverted: lower {lower} > upper {upper}")]
    BracketInversion { lower: f64, upper: f64 },

    #[error("continuity step too large at t = {t} (residual {residual:.3e})")]
    ContinuityStepTooLarge { t: f64, residual: f64 },

    #[error("continuity path failed at t = {failed_t}; last good t = {last_good_t}")]
    PathFailure { last_good_t: f64, failed_t: f64 },

    #[error("time step {dt:e} exceeds the explicit stability limit {limit:e}")]
    UnstableTimeStep { dt: f64, limit: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::MetricDegenerate(_)
                | Error::InsufficientRegularity { .. }
                | Error::QuadratureBudget(_)
                | Error::KernelVanishes(_)
                | Error::BracketInversion { .. }
                | Error::ContinuityStepTooLarge { .. }
                | Error::PathFailure { .. }
                | Error::UnstableTimeStep { .. }
                | Error::Internal(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
