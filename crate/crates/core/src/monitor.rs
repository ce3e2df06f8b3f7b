//! Streaming stopping rule.
//!
//! Feed one p-value per decision point. Hits are cumulative and never expire:
//! the test stops at the first `t` where the number of decision points
//! `k <= t` with `p_k <= delta_k` reaches `r_t`.

use crate::error::{Error, Result};
use crate::plan::{has_errors, validate_plan, Finding, TestPlan, Threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    Stopped { at: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Keep going. `next_r` and `next_delta` describe decision point `t + 1`.
    Continue {
        t: u64,
        hits: u64,
        next_r: u64,
        next_delta: f64,
    },
    StopSignificant { t: u64, hits: u64 },
}

impl Decision {
    pub fn is_stop(&self) -> bool {
        matches!(self, Self::StopSignificant { .. })
    }

    pub fn t(&self) -> u64 {
        match *self {
            Self::Continue { t, .. } | Self::StopSignificant { t, .. } => t,
        }
    }
}

/// Single-writer state for one monitored stream.
#[derive(Debug, Clone)]
pub struct MonitorState {
    plan: TestPlan,
    t: u64,
    hits: u64,
    status: Status,
    findings: Vec<Finding>,
}

impl MonitorState {
    /// Starts a monitor at `t = 0`. Plans with error-level findings are
    /// refused; warnings are kept and available from [`Self::findings`].
    pub fn new(plan: TestPlan) -> Result<Self> {
        let findings = validate_plan(&plan);
        if has_errors(&findings) {
            let msg = findings
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidPlan(msg));
        }
        Ok(Self {
            plan,
            t: 0,
            hits: 0,
            status: Status::Running,
            findings,
        })
    }

    pub fn plan(&self) -> &TestPlan {
        &self.plan
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    /// Threshold that the next observation will be held to.
    pub fn next_threshold(&self) -> Threshold {
        self.plan.threshold_at(self.t + 1)
    }

    /// Consumes the p-value for the next decision point.
    ///
    /// A p-value equal to the threshold counts as significant. After a stop
    /// every call fails and the state is left untouched.
    pub fn observe(&mut self, p: f64) -> Result<Decision> {
        if let Status::Stopped { at } = self.status {
            return Err(Error::MonitorStopped { t: at });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain {
                what: "p-value",
                value: p,
                range: "[0, 1]",
            });
        }
        let threshold = self.next_threshold();
        self.t += 1;
        if p <= threshold.delta {
            self.hits += 1;
        }
        if self.hits >= threshold.r {
            self.status = Status::Stopped { at: self.t };
            return Ok(Decision::StopSignificant {
                t: self.t,
                hits: self.hits,
            });
        }
        let next = self.next_threshold();
        Ok(Decision::Continue {
            t: self.t,
            hits: self.hits,
            next_r: next.r,
            next_delta: next.delta,
        })
    }
}

/// Folds [`MonitorState::observe`] over `ps`, stopping at the first
/// significant stop. An empty stream yields `Continue` at `t = 0`.
pub fn run_stream(plan: TestPlan, ps: &[f64]) -> Result<(Decision, MonitorState)> {
    let mut state = MonitorState::new(plan)?;
    let first = state.next_threshold();
    let mut decision = Decision::Continue {
        t: 0,
        hits: 0,
        next_r: first.r,
        next_delta: first.delta,
    };
    for &p in ps {
        decision = state.observe(p)?;
        if decision.is_stop() {
            break;
        }
    }
    Ok((decision, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::RepetitionPolicy;
    use crate::spending::SpendingSchedule;

    fn plan(w: f64, u: f64) -> TestPlan {
        TestPlan::new(
            SpendingSchedule::geometric(0.05, w).unwrap(),
            RepetitionPolicy::fraction(u).unwrap(),
        )
    }

    #[test]
    fn fresh_monitor() {
        let m = MonitorState::new(plan(0.001, 0.1)).unwrap();
        assert_eq!((m.t(), m.hits(), m.status()), (0, 0, Status::Running));
    }

    #[test]
    fn refuses_malformed_plans_and_keeps_warnings() {
        let bad = TestPlan::new(
            SpendingSchedule::geometric(0.05, 0.1).unwrap(),
            RepetitionPolicy::Constant { r: 0 },
        );
        assert!(matches!(MonitorState::new(bad), Err(Error::InvalidPlan(_))));

        let clamped = TestPlan::new(
            SpendingSchedule::geometric(0.05, 0.5).unwrap(),
            RepetitionPolicy::constant(1000).unwrap(),
        );
        let m = MonitorState::new(clamped).unwrap();
        assert!(m.findings().contains(&Finding::Clamped { first_t: 1 }));
    }

    #[test]
    fn immediate_hit_stops() {
        let mut m = MonitorState::new(plan(0.001, 0.1)).unwrap();
        assert_eq!(m.next_threshold().delta, 0.05 * 0.001);
        assert_eq!(m.observe(3e-5).unwrap(), Decision::StopSignificant { t: 1, hits: 1 });
        assert_eq!(m.status(), Status::Stopped { at: 1 });
    }

    #[test]
    fn half_policy_examples() {
        let mut m = MonitorState::new(plan(0.01, 0.5)).unwrap();
        assert!(m.observe(1e-9).unwrap().is_stop());

        let mut m = MonitorState::new(plan(0.01, 0.5)).unwrap();
        let first = m.observe(0.9).unwrap();
        assert!(matches!(first, Decision::Continue { t: 1, hits: 0, next_r: 1, .. }));
        assert_eq!(m.observe(1e-9).unwrap(), Decision::StopSignificant { t: 2, hits: 1 });
    }

    #[test]
    fn equality_counts_as_hit() {
        let p = plan(0.01, 0.5);
        let delta = p.threshold_at(1).delta;
        let (d, _) = run_stream(p, &[delta]).unwrap();
        assert_eq!(d, Decision::StopSignificant { t: 1, hits: 1 });
    }

    #[test]
    fn stopped_is_absorbing() {
        let mut m = MonitorState::new(plan(0.01, 0.5)).unwrap();
        m.observe(0.0).unwrap();
        let before = (m.t(), m.hits(), m.status());
        assert_eq!(m.observe(0.5), Err(Error::MonitorStopped { t: 1 }));
        assert_eq!(before, (m.t(), m.hits(), m.status()));
    }

    #[test]
    fn rejects_bad_p_without_advancing() {
        let mut m = MonitorState::new(plan(0.01, 0.5)).unwrap();
        assert!(matches!(m.observe(1.5), Err(Error::Domain { .. })));
        assert!(matches!(m.observe(f64::NAN), Err(Error::Domain { .. })));
        assert_eq!(m.t(), 0);
    }

    #[test]
    fn stream_examples() {
        let (d, s) = run_stream(plan(0.01, 0.1), &[1.0; 500]).unwrap();
        assert!(matches!(d, Decision::Continue { t: 500, hits: 0, .. }));
        assert_eq!(s.status(), Status::Running);

        let (d, _) = run_stream(plan(0.01, 0.1), &[]).unwrap();
        let first = plan(0.01, 0.1).threshold_at(1);
        assert_eq!(
            d,
            Decision::Continue {
                t: 0,
                hits: 0,
                next_r: 1,
                next_delta: first.delta
            }
        );

        let half = plan(0.01, 0.5);
        let at_threshold: Vec<f64> = (1..=20).map(|t| half.threshold_at(t).delta).collect();
        let (d, _) = run_stream(half, &at_threshold).unwrap();
        assert_eq!(d, Decision::StopSignificant { t: 1, hits: 1 });
    }

    #[test]
    fn zero_threshold_stops_only_on_zero() {
        let zeros = TestPlan::new(
            SpendingSchedule::custom(0.05, vec![0.0; 5]).unwrap(),
            RepetitionPolicy::constant(1).unwrap(),
        );
        let (d, _) = run_stream(zeros.clone(), &[1e-300, 1e-12, 0.3]).unwrap();
        assert!(!d.is_stop());
        let (d, _) = run_stream(zeros, &[1e-300, 0.0]).unwrap();
        assert_eq!(d, Decision::StopSignificant { t: 2, hits: 1 });
    }
}
