//! Unbounded sequential test plans that require repeated significance.
//!
//! A plan spends a type-1 error budget `alpha` over an unbounded sequence of
//! decision points and requires `r_t` significant decision points among the
//! first `t` before stopping. Each decision point is significant when its
//! p-value is at most `delta_t = alpha_t * r_t`, which keeps the overall
//! type-1 error at most `alpha` without any assumption about the dependence
//! between p-values.
//!
//! - [`numeric`]: normal tails, zeta and p-series sums.
//! - [`spending`]: geometric, p-series, headless p-series and custom budgets.
//! - [`plan`]: thresholds, worst-case type-1 error, validation and the
//!   always-valid baseline boundary.
//! - [`monitor`]: the streaming stopping rule.
//! - [`simulate`]: seeded Monte Carlo verification.

pub mod error;
pub mod monitor;
pub mod numeric;
pub mod plan;
pub mod simulate;
pub mod spending;

pub use error::{Error, Result};
pub use monitor::{run_stream, Decision, MonitorState, Status};
pub use numeric::{pseries_head, pseries_tail, two_sided_p, two_sided_z, zeta, Probability, ZScore};
pub use plan::{
    baseline_z, corollary_sum, has_errors, validate_plan, worst_case_alpha, AlphaEstimate, Finding,
    RepetitionPolicy, Severity, TestPlan, Threshold, WorstCaseAccumulator,
};
pub use simulate::{
    derive_seed, sample_stream, simulate, sweep, SimulationConfig, SimulationReport, StreamModel,
};
pub use spending::{Allotment, SpendingSchedule};
