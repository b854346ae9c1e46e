use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Li_1 diverges at argument {theta} (mod 2pi); use a positive regularization epsilon or a cutoff")]
    Divergence { theta: f64 },

    #[error("unsupported polylogarithm order {0}; only 1, 2 and 3 are implemented")]
    UnsupportedOrder(i32),

    #[error("site index {site} out of range for chain of length {len}")]
    SiteOutOfRange { site: usize, len: usize },

    #[error("chain length {requested} exceeds the exact-evolution capacity {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure {
        t: f64,
        reason: String,
        last_state: Vec<f64>,
    },

    #[error("requested window [{start}, {end}] exceeds trajectory span [{span_start}, {span_end}]")]
    WindowOutOfRange {
        start: f64,
        end: f64,
        span_start: f64,
        span_end: f64,
    },

    #[error("time grids differ and resampling is disabled")]
    GridMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. } | Error::Divergence { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
