//! Alpha-spending schedules.
//!
//! Each schedule assigns a nonnegative budget `alpha_t` to every decision
//! point `t >= 1` with `sum_t alpha_t <= alpha`. Schedules are closed-form
//! generators validated once at construction; nothing is materialized, so
//! `t` may run to 10^9 and beyond.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{pseries_range, pseries_tail, zeta, ZETA_CUTOFF};

/// Budget assigned to a single decision point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allotment {
    pub value: f64,
    /// The closed form is positive but the value underflowed to zero.
    pub exhausted: bool,
}

impl Allotment {
    fn from_positive(value: f64) -> Self {
        Self {
            value,
            exhausted: value == 0.0,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is not in (0, 1]")))
    }
}

/// `alpha_t = w (1 - w)^(t-1) alpha`: every decision point withdraws the same
/// fraction `w` of what is left.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricSchedule {
    alpha: f64,
    w: f64,
    ln_first: f64,
    ln_keep: f64,
}

impl GeometricSchedule {
    pub fn new(alpha: f64, w: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(w > 0.0 && w < 1.0) {
            return Err(invalid("w", format!("withdrawal rate {w} is not in (0, 1)")));
        }
        Ok(Self {
            alpha,
            w,
            ln_first: alpha.ln() + w.ln(),
            ln_keep: (-w).ln_1p(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// `ln alpha_t`, finite for every `t` even where `alpha_t` underflows.
    pub fn ln_alpha_at(&self, t: u64) -> f64 {
        self.ln_first + (t - 1) as f64 * self.ln_keep
    }

    fn alpha_at(&self, t: u64) -> Allotment {
        let decay = (t - 1) as f64 * self.ln_keep;
        // Only the decay factor goes through exp unless the whole product is
        // near the bottom of the range; keeps alpha_1 = w alpha exact.
        let value = if decay > -700.0 {
            self.alpha * self.w * decay.exp()
        } else {
            self.ln_alpha_at(t).exp()
        };
        Allotment::from_positive(value)
    }

    fn remaining_after(&self, t: u64) -> f64 {
        self.alpha * (t as f64 * self.ln_keep).exp()
    }

    fn partial_sum(&self, t: u64) -> f64 {
        -self.alpha * (t as f64 * self.ln_keep).exp_m1()
    }
}

/// `alpha_t = alpha / (zeta(v) t^v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PSeriesSchedule {
    alpha: f64,
    v: f64,
    zeta: f64,
}

impl PSeriesSchedule {
    pub fn new(alpha: f64, v: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let zeta = zeta(v)?;
        Ok(Self { alpha, v, zeta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }
}

/// A p-series with its first `s` terms removed and the remaining tail
/// renormalized: `alpha_t = alpha / ((zeta(v) - h(s, v)) (t + s)^v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadlessPSeriesSchedule {
    alpha: f64,
    v: f64,
    s: u64,
    /// `zeta(v) - h(s, v)`, the mass of the retained tail.
    norm: f64,
}

impl HeadlessPSeriesSchedule {
    pub fn new(alpha: f64, v: f64, s: u64) -> Result<Self> {
        check_alpha(alpha)?;
        let norm = pseries_tail(s, v)?;
        Ok(Self { alpha, v, s, norm })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    /// `zeta(v) - h(s, v)`.
    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// Shared machinery for the two p-series families: `offset` is the number of
/// leading series terms skipped and `norm` the mass of the terms kept.
fn pseries_alpha_at(alpha: f64, v: f64, norm: f64, offset: u64, t: u64) -> Allotment {
    let k = (t + offset) as f64;
    Allotment::from_positive(alpha / norm * k.powf(-v))
}

fn pseries_partial_sum(alpha: f64, v: f64, norm: f64, offset: u64, t: u64) -> f64 {
    let sum = if t < ZETA_CUTOFF {
        pseries_range(offset + 1, offset + t, v)
    } else {
        pseries_tail(offset + t, v).map(|tail| norm - tail)
    };
    // v > 1 was checked at construction.
    alpha * sum.expect("validated exponent") / norm
}

fn pseries_remaining(alpha: f64, v: f64, norm: f64, offset: u64, t: u64) -> f64 {
    alpha * pseries_tail(offset + t, v).expect("validated exponent") / norm
}

/// A finite, hand-built schedule; decision points past the end get nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomSchedule {
    alpha: f64,
    values: Vec<f64>,
    total: f64,
}

impl CustomSchedule {
    pub fn new(alpha: f64, values: Vec<f64>) -> Result<Self> {
        check_alpha(alpha)?;
        if let Some((i, bad)) = values
            .iter()
            .enumerate()
            .find(|(_, x)| !(x.is_finite() && **x >= 0.0))
        {
            return Err(invalid(
                "values",
                format!("entry {} ({bad}) is not a finite nonnegative number", i + 1),
            ));
        }
        let total: f64 = values.iter().sum();
        if total > alpha + 1e-12 {
            return Err(invalid(
                "values",
                format!("sum {total} exceeds the budget alpha = {alpha}"),
            ));
        }
        Ok(Self {
            alpha,
            values,
            total,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Any of the supported spending families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub enum SpendingSchedule {
    Geometric(GeometricSchedule),
    PSeries(PSeriesSchedule),
    HeadlessPSeries(HeadlessPSeriesSchedule),
    Custom(CustomSchedule),
}

impl SpendingSchedule {
    pub fn geometric(alpha: f64, w: f64) -> Result<Self> {
        GeometricSchedule::new(alpha, w).map(Self::Geometric)
    }

    pub fn pseries(alpha: f64, v: f64) -> Result<Self> {
        PSeriesSchedule::new(alpha, v).map(Self::PSeries)
    }

    pub fn headless_pseries(alpha: f64, v: f64, s: u64) -> Result<Self> {
        HeadlessPSeriesSchedule::new(alpha, v, s).map(Self::HeadlessPSeries)
    }

    pub fn custom(alpha: f64, values: Vec<f64>) -> Result<Self> {
        CustomSchedule::new(alpha, values).map(Self::Custom)
    }

    /// The declared budget `alpha`.
    pub fn alpha(&self) -> f64 {
        match self {
            Self::Geometric(g) => g.alpha,
            Self::PSeries(p) => p.alpha,
            Self::HeadlessPSeries(h) => h.alpha,
            Self::Custom(c) => c.alpha,
        }
    }

    /// Budget at decision point `t`.
    ///
    /// # Panics
    ///
    /// If `t == 0`; decision points are numbered from one.
    pub fn alpha_at(&self, t: u64) -> Allotment {
        assert!(t >= 1, "decision points start at t = 1");
        match self {
            Self::Geometric(g) => g.alpha_at(t),
            Self::PSeries(p) => pseries_alpha_at(p.alpha, p.v, p.zeta, 0, t),
            Self::HeadlessPSeries(h) => pseries_alpha_at(h.alpha, h.v, h.norm, h.s, t),
            Self::Custom(c) => Allotment {
                value: c.values.get((t - 1) as usize).copied().unwrap_or(0.0),
                exhausted: false,
            },
        }
    }

    /// `sum_{t=1..horizon} alpha_t`.
    pub fn partial_sum(&self, horizon: u64) -> f64 {
        match self {
            Self::Geometric(g) => g.partial_sum(horizon),
            Self::PSeries(p) => pseries_partial_sum(p.alpha, p.v, p.zeta, 0, horizon),
            Self::HeadlessPSeries(h) => pseries_partial_sum(h.alpha, h.v, h.norm, h.s, horizon),
            Self::Custom(c) => c.values.iter().take(clamp_len(horizon)).sum(),
        }
    }

    /// `sum_{t > horizon} alpha_t`, evaluated directly rather than as a
    /// difference so it stays accurate when tiny.
    pub fn remaining_after(&self, horizon: u64) -> f64 {
        match self {
            Self::Geometric(g) => g.remaining_after(horizon),
            Self::PSeries(p) => pseries_remaining(p.alpha, p.v, p.zeta, 0, horizon),
            Self::HeadlessPSeries(h) => pseries_remaining(h.alpha, h.v, h.norm, h.s, horizon),
            Self::Custom(c) => c.values.iter().skip(clamp_len(horizon)).sum(),
        }
    }

    /// Analytic `sum_t alpha_t`: the budget for the infinite families, the
    /// finite sum for custom schedules.
    pub fn total_alpha(&self) -> f64 {
        match self {
            Self::Custom(c) => c.total,
            other => other.alpha(),
        }
    }

    /// Whether `alpha_t` is nonincreasing in `t`, which holds for every
    /// family except custom schedules.
    pub fn is_nonincreasing(&self) -> bool {
        !matches!(self, Self::Custom(_))
    }

    /// Last decision point with a nonzero budget, if the schedule is finite.
    pub fn last_point(&self) -> Option<u64> {
        match self {
            Self::Custom(c) => Some(c.values.len() as u64),
            _ => None,
        }
    }

    /// Short human-readable description, free of commas.
    pub fn label(&self) -> String {
        match self {
            Self::Geometric(g) => format!("geometric(alpha={} w={})", g.alpha, g.w),
            Self::PSeries(p) => format!("pseries(alpha={} v={})", p.alpha, p.v),
            Self::HeadlessPSeries(h) => {
                format!("headless_pseries(alpha={} v={} s={})", h.alpha, h.v, h.s)
            }
            Self::Custom(c) => format!("custom(alpha={} n={})", c.alpha, c.values.len()),
        }
    }
}

fn clamp_len(horizon: u64) -> usize {
    usize::try_from(horizon).unwrap_or(usize::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ScheduleKind {
    Geometric,
    Pseries,
    HeadlessPseries,
    Custom,
}

/// Wire form of a schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSpec {
    kind: ScheduleKind,
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

fn require<T>(field: Option<T>, name: &'static str, kind: &str) -> Result<T> {
    field.ok_or_else(|| invalid(name, format!("required for {kind} schedules")))
}

fn forbid<T>(field: &Option<T>, name: &'static str, kind: &str) -> Result<()> {
    match field {
        Some(_) => Err(invalid(name, format!("not used by {kind} schedules"))),
        None => Ok(()),
    }
}

impl TryFrom<ScheduleSpec> for SpendingSchedule {
    type Error = Error;

    fn try_from(spec: ScheduleSpec) -> Result<Self> {
        match spec.kind {
            ScheduleKind::Geometric => {
                let kind = "geometric";
                forbid(&spec.v, "v", kind)?;
                forbid(&spec.s, "s", kind)?;
                forbid(&spec.values, "values", kind)?;
                Self::geometric(spec.alpha, require(spec.w, "w", kind)?)
            }
            ScheduleKind::Pseries => {
                let kind = "pseries";
                forbid(&spec.w, "w", kind)?;
                forbid(&spec.s, "s", kind)?;
                forbid(&spec.values, "values", kind)?;
                Self::pseries(spec.alpha, require(spec.v, "v", kind)?)
            }
            ScheduleKind::HeadlessPseries => {
                let kind = "headless_pseries";
                forbid(&spec.w, "w", kind)?;
                forbid(&spec.values, "values", kind)?;
                Self::headless_pseries(
                    spec.alpha,
                    require(spec.v, "v", kind)?,
                    require(spec.s, "s", kind)?,
                )
            }
            ScheduleKind::Custom => {
                let kind = "custom";
                forbid(&spec.w, "w", kind)?;
                forbid(&spec.v, "v", kind)?;
                forbid(&spec.s, "s", kind)?;
                Self::custom(spec.alpha, require(spec.values, "values", kind)?)
            }
        }
    }
}

impl From<SpendingSchedule> for ScheduleSpec {
    fn from(schedule: SpendingSchedule) -> Self {
        let mut spec = ScheduleSpec {
            kind: ScheduleKind::Geometric,
            alpha: schedule.alpha(),
            w: None,
            v: None,
            s: None,
            values: None,
        };
        match schedule {
            SpendingSchedule::Geometric(g) => spec.w = Some(g.w),
            SpendingSchedule::PSeries(p) => {
                spec.kind = ScheduleKind::Pseries;
                spec.v = Some(p.v);
            }
            SpendingSchedule::HeadlessPSeries(h) => {
                spec.kind = ScheduleKind::HeadlessPseries;
                spec.v = Some(h.v);
                spec.s = Some(h.s);
            }
            SpendingSchedule::Custom(c) => {
                spec.kind = ScheduleKind::Custom;
                spec.values = Some(c.values);
            }
        }
        spec
    }
}
