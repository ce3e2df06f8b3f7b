//! Test plans: a spending schedule paired with a repetition policy.
//!
//! Decision point `t` is significant when its p-value is at most
//! `delta_t = alpha_t * r_t`; the test stops at the first `t` with at least
//! `r_t` significant points among `1..=t`. Because `sum_t delta_t / r_t` is
//! then `sum_t alpha_t`, the type-1 error never exceeds the budget.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::z_for;
use crate::spending::SpendingSchedule;

/// How many significant decision points are required to stop at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicySpec", into = "PolicySpec")]
pub enum RepetitionPolicy {
    /// `r_t = ceil(u t)`.
    Fraction { u: f64 },
    Constant { r: u64 },
    /// Listed requirements, holding the final value after the list ends.
    Custom { values: Vec<u64> },
}

/// `ceil(x)`, except that values within a few ulps above an integer snap
/// down to it, so `ceil(0.1 * 30)` is 3 and not 4.
fn tolerant_ceil(x: f64) -> u64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

impl RepetitionPolicy {
    pub fn fraction(u: f64) -> Result<Self> {
        if u > 0.0 && u <= 1.0 {
            Ok(Self::Fraction { u })
        } else {
            Err(invalid("u", format!("fraction {u} is not in (0, 1]")))
        }
    }

    pub fn constant(r: u64) -> Result<Self> {
        if r >= 1 {
            Ok(Self::Constant { r })
        } else {
            Err(invalid("r", "must be at least 1"))
        }
    }

    pub fn custom(values: Vec<u64>) -> Result<Self> {
        let policy = Self::Custom { values };
        match policy.problem() {
            None => Ok(policy),
            Some(reason) => Err(invalid("values", reason)),
        }
    }

    /// Structural problems, for policies built directly from the variants.
    fn problem(&self) -> Option<String> {
        match self {
            Self::Fraction { u } if !(*u > 0.0 && *u <= 1.0) => {
                Some(format!("fraction u = {u} is not in (0, 1]"))
            }
            Self::Constant { r: 0 } => Some("constant requirement must be at least 1".into()),
            Self::Custom { values } => {
                if values.is_empty() {
                    return Some("custom requirements must not be empty".into());
                }
                if values[0] == 0 {
                    return Some("requirements must be at least 1".into());
                }
                values
                    .windows(2)
                    .position(|w| w[1] < w[0])
                    .map(|i| {
                        format!(
                            "requirements must be nondecreasing: r_{} = {} < r_{} = {}",
                            i + 2,
                            values[i + 1],
                            i + 1,
                            values[i]
                        )
                    })
            }
            _ => None,
        }
    }

    /// `r_t`.
    ///
    /// # Panics
    ///
    /// If `t == 0`.
    pub fn r_at(&self, t: u64) -> u64 {
        assert!(t >= 1, "decision points start at t = 1");
        match self {
            Self::Fraction { u } => tolerant_ceil(u * t as f64).max(1),
            Self::Constant { r } => *r,
            Self::Custom { values } => {
                let i = usize::try_from(t - 1).unwrap_or(usize::MAX);
                values.get(i).or(values.last()).copied().unwrap_or(1)
            }
        }
    }

    /// The first decision point after `t` where `r` increases.
    fn next_step(&self, t: u64) -> Option<u64> {
        let current = self.r_at(t);
        match self {
            Self::Constant { .. } => None,
            Self::Custom { values } => ((t + 1)..=values.len() as u64).find(|&k| self.r_at(k) > current),
            Self::Fraction { u } => {
                let mut k = ((current as f64 / u).floor() as u64 + 1).max(t + 1);
                while k > t + 1 && self.r_at(k - 1) > current {
                    k -= 1;
                }
                while self.r_at(k) <= current {
                    k += 1;
                }
                Some(k)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Fraction { u } => format!("fraction(u={u})"),
            Self::Constant { r } => format!("constant(r={r})"),
            Self::Custom { values } => format!("custom(n={})", values.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyKind {
    Fraction,
    Constant,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicySpec {
    kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<u64>>,
}

impl TryFrom<PolicySpec> for RepetitionPolicy {
    type Error = Error;

    fn try_from(spec: PolicySpec) -> Result<Self> {
        let only = |ok: bool, kind: &str| {
            if ok {
                Ok(())
            } else {
                Err(invalid("policy", format!("{kind} policies take exactly one parameter")))
            }
        };
        match spec.kind {
            PolicyKind::Fraction => {
                only(spec.r.is_none() && spec.values.is_none(), "fraction")?;
                Self::fraction(spec.u.ok_or_else(|| invalid("u", "required for fraction policies"))?)
            }
            PolicyKind::Constant => {
                only(spec.u.is_none() && spec.values.is_none(), "constant")?;
                Self::constant(spec.r.ok_or_else(|| invalid("r", "required for constant policies"))?)
            }
            PolicyKind::Custom => {
                only(spec.u.is_none() && spec.r.is_none(), "custom")?;
                Self::custom(
                    spec.values
                        .ok_or_else(|| invalid("values", "required for custom policies"))?,
                )
            }
        }
    }
}

impl From<RepetitionPolicy> for PolicySpec {
    fn from(policy: RepetitionPolicy) -> Self {
        match policy {
            RepetitionPolicy::Fraction { u } => PolicySpec {
                kind: PolicyKind::Fraction,
                u: Some(u),
                r: None,
                values: None,
            },
            RepetitionPolicy::Constant { r } => PolicySpec {
                kind: PolicyKind::Constant,
                u: None,
                r: Some(r),
                values: None,
            },
            RepetitionPolicy::Custom { values } => PolicySpec {
                kind: PolicyKind::Custom,
                u: None,
                r: None,
                values: Some(values),
            },
        }
    }
}

/// Everything known about one decision point of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub t: u64,
    pub alpha_t: f64,
    pub r: u64,
    /// `min(alpha_t * r, 1)`.
    pub delta: f64,
    /// `alpha_t * r` exceeded one.
    pub clamped: bool,
    /// `alpha_t` underflowed to zero.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPlan {
    pub schedule: SpendingSchedule,
    pub policy: RepetitionPolicy,
}

impl TestPlan {
    pub fn new(schedule: SpendingSchedule, policy: RepetitionPolicy) -> Self {
        Self { schedule, policy }
    }

    /// Total budget spent by the schedule.
    pub fn alpha(&self) -> f64 {
        self.schedule.total_alpha()
    }

    pub fn r_at(&self, t: u64) -> u64 {
        self.policy.r_at(t)
    }

    pub fn threshold_at(&self, t: u64) -> Threshold {
        let allot = self.schedule.alpha_at(t);
        let r = self.policy.r_at(t);
        let raw = allot.value * r as f64;
        Threshold {
            t,
            alpha_t: allot.value,
            r,
            delta: raw.min(1.0),
            clamped: raw > 1.0,
            exhausted: allot.exhausted,
        }
    }

    /// `delta_t` as a two-sided Z score.
    pub fn z_threshold_at(&self, t: u64) -> Result<f64> {
        let delta = self.threshold_at(t).delta;
        if delta == 0.0 {
            return Err(Error::ThresholdExhausted { t });
        }
        z_for(delta)
    }

    /// The loosest threshold over `1..=horizon` (earliest on ties).
    pub fn max_threshold(&self, horizon: u64) -> Threshold {
        let mut best = self.threshold_at(1);
        let mut consider = |th: Threshold| {
            if th.delta > best.delta {
                best = th;
            }
        };
        if self.schedule.is_nonincreasing() {
            // Within a run of constant r_t the threshold cannot grow.
            let mut t = 1;
            while let Some(next) = self.policy.next_step(t) {
                if next > horizon {
                    break;
                }
                consider(self.threshold_at(next));
                t = next;
            }
        } else {
            (2..=horizon).for_each(|t| consider(self.threshold_at(t)));
        }
        best
    }

    /// `(argmin, min)` of the required Z score over `1..=horizon`.
    pub fn min_z(&self, horizon: u64) -> Result<(u64, f64)> {
        let best = self.max_threshold(horizon);
        Ok((best.t, self.z_threshold_at(best.t)?))
    }

    /// Worst-case type-1 error by gathering thresholds through `horizon`,
    /// with the schedule's remaining budget bounding everything later.
    pub fn worst_case_alpha(&self, horizon: u64) -> Result<AlphaEstimate> {
        let mut acc = WorstCaseAccumulator::new();
        for t in 1..=horizon {
            let th = self.threshold_at(t);
            acc.push(th.delta, th.r)?;
        }
        // delta_t / r_t <= alpha_t, clamped or not.
        Ok(acc.finish(self.schedule.remaining_after(horizon)))
    }

    /// `sum_{t<=horizon} delta_t / r_t` plus the analytic remaining budget,
    /// at most one.
    pub fn corollary_bound(&self, horizon: u64) -> f64 {
        let head: f64 = (1..=horizon)
            .map(|t| {
                let th = self.threshold_at(t);
                th.delta / th.r as f64
            })
            .sum();
        (head + self.schedule.remaining_after(horizon)).min(1.0)
    }

    pub fn label(&self) -> String {
        format!("{} {}", self.schedule.label(), self.policy.label())
    }
}

/// Interval for the worst-case type-1 error of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// Mass gathered through `horizon`; a lower bound.
    pub collected: f64,
    /// What any later decision point could still add.
    pub tail_bound: f64,
    pub horizon: u64,
}

impl AlphaEstimate {
    pub fn upper(&self) -> f64 {
        (self.collected + self.tail_bound).min(1.0)
    }
}

/// Streaming form of the worst-case gathering procedure.
///
/// Thresholds are appended to a pending list; whenever the list holds `r_t`
/// entries the smallest entry is banked as type-1 mass, subtracted from every
/// entry, and exhausted entries leave the list. The list is kept as a
/// multiset of `value + offset` keys, so the uniform subtraction is a single
/// update of `offset`. The offset resets whenever the list empties, which
/// keeps the common `r_t = 1` case exact.
#[derive(Debug, Clone, Default)]
pub struct WorstCaseAccumulator {
    /// Bit pattern of `entry + offset` (nonnegative, so bit order is value
    /// order) to multiplicity.
    pending: BTreeMap<u64, u64>,
    len: u64,
    offset: f64,
    banked: f64,
    t: u64,
    last_r: u64,
}

impl WorstCaseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, delta: f64, r: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Domain {
                what: "threshold",
                value: delta,
                range: "[0, 1]",
            });
        }
        let t = self.t + 1;
        if r == 0 {
            return Err(invalid("r", format!("r_{t} must be at least 1")));
        }
        if r < self.last_r {
            return Err(Error::DecreasingRepetition {
                t,
                previous: self.last_r,
                current: r,
            });
        }
        self.t = t;
        self.last_r = r;

        *self.pending.entry((delta + self.offset).to_bits()).or_insert(0) += 1;
        self.len += 1;
        if self.len == r {
            let (key, count) = self.pending.pop_first().expect("list holds r >= 1 entries");
            // Subtracting the minimum from every entry is moving the offset
            // to it; entries equal to it are the ones that reach zero.
            self.offset = f64::from_bits(key);
            self.len -= count;
            if self.len == 0 {
                self.banked += self.offset;
                self.offset = 0.0;
            }
        }
        Ok(())
    }

    /// Mass gathered so far, before clamping.
    pub fn collected(&self) -> f64 {
        self.banked + self.offset
    }

    /// Sum of the entries still waiting in the list.
    pub fn residual(&self) -> f64 {
        self.pending
            .iter()
            .map(|(&key, &count)| (f64::from_bits(key) - self.offset) * count as f64)
            .sum()
    }

    pub fn horizon(&self) -> u64 {
        self.t
    }

    /// Closes the interval. `beyond` must bound `sum_{t > horizon}
    /// delta_t / r_t`; leftover entries can contribute at most their sum
    /// divided by the current requirement.
    pub fn finish(&self, beyond: f64) -> AlphaEstimate {
        let collected = self.collected().min(1.0);
        let leftover = if self.last_r == 0 {
            0.0
        } else {
            self.residual() / self.last_r as f64
        };
        AlphaEstimate {
            collected,
            tail_bound: (leftover + beyond).min(1.0 - collected).max(0.0),
            horizon: self.t,
        }
    }
}

/// Worst-case type-1 error of explicit threshold and requirement sequences
/// through `horizon`. `beyond` bounds `sum_{t > horizon} delta_t / r_t`.
pub fn worst_case_alpha(deltas: &[f64], rs: &[u64], horizon: u64, beyond: f64) -> Result<AlphaEstimate> {
    let n = usize::try_from(horizon).unwrap_or(usize::MAX);
    if deltas.len() < n || rs.len() < n {
        return Err(invalid(
            "horizon",
            format!(
                "{horizon} exceeds the {} thresholds and {} requirements supplied",
                deltas.len(),
                rs.len()
            ),
        ));
    }
    let mut acc = WorstCaseAccumulator::new();
    for (&delta, &r) in deltas.iter().zip(rs).take(n) {
        acc.push(delta, r)?;
    }
    Ok(acc.finish(beyond))
}

/// `min(sum_t delta_t / r_t, 1)` over explicit sequences.
pub fn corollary_sum(deltas: &[f64], rs: &[u64]) -> f64 {
    deltas
        .iter()
        .zip(rs)
        .map(|(d, &r)| d / r as f64)
        .sum::<f64>()
        .min(1.0)
}

/// Z score required at `t` by the always-valid boundary built on
/// autocorrelation among running averages:
/// `sqrt(2 (t rho^2 + 1) / (t rho^2) * ln(sqrt(t rho^2 + 1) / alpha))`.
pub fn baseline_z(t: u64, rho: f64, alpha: f64) -> Result<f64> {
    if t == 0 {
        return Err(invalid("t", "decision points start at 1"));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho", format!("{rho} is not a positive number")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("{alpha} is not in (0, 1)")));
    }
    let x = t as f64 * rho * rho;
    Ok((2.0 * (x + 1.0) / x * ((x + 1.0).sqrt() / alpha).ln()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

/// Something `validate_plan` noticed.
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// `alpha_t r_t > 1` from `first_t` on (at least there); the threshold is
    /// clamped to one, which is vacuous but still valid.
    Clamped { first_t: u64 },
    /// The repetition policy is malformed.
    BadPolicy { reason: String },
    /// First decision point whose threshold underflows to zero.
    BudgetExhausted { first_t: u64 },
}

impl Finding {
    pub fn severity(&self) -> Severity {
        match self {
            Self::Clamped { .. } => Severity::Warning,
            Self::BadPolicy { .. } => Severity::Error,
            Self::BudgetExhausted { .. } => Severity::Info,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Clamped { first_t } => {
                write!(f, "warning: delta_t clamped to 1 starting at t = {first_t}")
            }
            Self::BadPolicy { reason } => write!(f, "error: {reason}"),
            Self::BudgetExhausted { first_t } => {
                write!(f, "info: budget exhausted (delta_t underflows to 0) from t = {first_t}")
            }
        }
    }
}

/// Cap on step points examined when hunting for clamped thresholds.
const CLAMP_SCAN_LIMIT: u64 = 10_000_000;

/// Checks a plan without running it. Divergent spending never gets this far:
/// those schedules cannot be constructed.
pub fn validate_plan(plan: &TestPlan) -> Vec<Finding> {
    let mut findings = Vec::new();
    if let Some(reason) = plan.policy.problem() {
        findings.push(Finding::BadPolicy { reason });
        return findings;
    }
    if let Some(first_t) = first_clamped(plan) {
        findings.push(Finding::Clamped { first_t });
    }
    if let Some(first_t) = exhaustion_point(&plan.schedule) {
        findings.push(Finding::BudgetExhausted { first_t });
    }
    findings
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity() == Severity::Error)
}

fn first_clamped(plan: &TestPlan) -> Option<u64> {
    if let Some(last) = plan.schedule.last_point() {
        return (1..=last).find(|&t| plan.threshold_at(t).clamped);
    }
    // alpha_t is nonincreasing, so within a run of constant r_t the
    // threshold only shrinks: only the points where r_t steps up matter.
    let mut t = 1;
    for _ in 0..CLAMP_SCAN_LIMIT {
        let th = plan.threshold_at(t);
        if th.clamped {
            return Some(t);
        }
        if th.exhausted {
            return None;
        }
        if let RepetitionPolicy::Fraction { u } = plan.policy {
            if fraction_envelope_sup(&plan.schedule, u, t) <= 1.0 {
                return None;
            }
        }
        t = plan.policy.next_step(t)?;
    }
    None
}

/// Supremum over real `x >= t` of `alpha(x) (u x + 1)`, an envelope of
/// `delta_x` under a fraction policy. The log of the envelope is unimodal for
/// every infinite family, so the supremum sits at the stationary point or at
/// `t`.
fn fraction_envelope_sup(schedule: &SpendingSchedule, u: f64, t: u64) -> f64 {
    let t = t as f64;
    match schedule {
        SpendingSchedule::Geometric(g) => {
            let ln_keep = (-g.w()).ln_1p();
            let x = (-1.0 / ln_keep - 1.0 / u).max(t);
            g.alpha() * g.w() * ((x - 1.0) * ln_keep).exp() * (u * x + 1.0)
        }
        SpendingSchedule::PSeries(p) => pseries_envelope(p.alpha(), p.v(), p.zeta(), 0.0, u, t),
        SpendingSchedule::HeadlessPSeries(h) => {
            pseries_envelope(h.alpha(), h.v(), h.norm(), h.s() as f64, u, t)
        }
        SpendingSchedule::Custom(_) => f64::INFINITY,
    }
}

fn pseries_envelope(alpha: f64, v: f64, norm: f64, s: f64, u: f64, t: f64) -> f64 {
    // d/dx ln((x + s)^-v (u x + 1)) = 0  at  x = (v - u s) / (u (1 - v))
    let x = ((v - u * s) / (u * (1.0 - v))).max(t);
    alpha / norm * (x + s).powf(-v) * (u * x + 1.0)
}

/// Smallest `t` whose budget underflows, for schedules with nonincreasing
/// budgets.
fn exhaustion_point(schedule: &SpendingSchedule) -> Option<u64> {
    if !schedule.is_nonincreasing() {
        return None;
    }
    let exhausted = |t: u64| schedule.alpha_at(t).exhausted;
    let mut hi = 1_u64;
    while !exhausted(hi) {
        if hi >= 1 << 62 {
            return None;
        }
        hi *= 2;
    }
    let mut lo = hi / 2; // not exhausted (or zero)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if exhausted(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}
