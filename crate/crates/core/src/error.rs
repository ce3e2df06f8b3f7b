use thiserror::Error;

/// Errors raised by plan construction, numeric kernels and the monitor.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A p-value of zero has no finite Z-score equivalent.
    #[error("degenerate threshold: probability 0 has no finite Z score")]
    DegenerateThreshold,

    #[error("domain error: {what} = {value} is outside {range}")]
    Domain {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    /// A p-series with exponent at most one does not converge, so it cannot
    /// spend a finite budget over an unbounded number of decision points.
    #[error("divergent series: p-series exponent v = {v} must be greater than 1")]
    DivergentSeries { v: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("repetition requirements must be nondecreasing: r_{t} = {current} < r_{prev_t} = {previous}", prev_t = t - 1)]
    DecreasingRepetition { t: u64, previous: u64, current: u64 },

    /// The threshold at decision point `t` underflowed to zero.
    #[error("budget exhausted: threshold at t = {t} is zero")]
    ThresholdExhausted { t: u64 },

    #[error("monitor already stopped at t = {t}")]
    MonitorStopped { t: u64 },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
