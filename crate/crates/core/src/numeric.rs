//! Scalar kernels: two-sided normal tail probabilities and their inverse,
//! the Riemann zeta function for real exponents above one, and p-series
//! partial sums.
//!
//! Tail probabilities are always evaluated in the complementary direction
//! (`erfc`, never `1 - cdf`) and the quantile is refined in the log domain,
//! so thresholds deep in the tail (1e-10 and far below) keep full relative
//! precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Domain {
                what: "probability",
                value,
                range: "[0, 1]",
            })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// A nonnegative number of standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ZScore(f64);

impl ZScore {
    pub fn new(value: f64) -> Result<Self> {
        if value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain {
                what: "z score",
                value,
                range: "[0, inf)",
            })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ZScore {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ZScore> for f64 {
    fn from(z: ZScore) -> f64 {
        z.0
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Above this the upper tail is taken from its asymptotic expansion, since
/// `erfc` is close to underflow.
const ASYMPTOTIC_Z: f64 = 35.0;

/// `P(|N(0,1)| >= z)`.
pub fn two_sided_p(z: ZScore) -> Probability {
    Probability(libm::erfc(z.get() / std::f64::consts::SQRT_2).min(1.0))
}

/// The `z >= 0` whose two tails together hold mass `p`.
///
/// Fails with [`Error::DegenerateThreshold`] for `p = 0` rather than
/// returning infinity.
pub fn two_sided_z(p: Probability) -> Result<ZScore> {
    let p = p.get();
    if p == 0.0 {
        return Err(Error::DegenerateThreshold);
    }
    if p == 1.0 {
        return Ok(ZScore(0.0));
    }
    // Halving a subnormal can round to zero; the tail mass is then p itself
    // to well below any meaningful precision.
    let q = if p / 2.0 > 0.0 { p / 2.0 } else { p };
    let ln_q = q.ln();

    let mut z = -acklam_lower_quantile(q);
    for _ in 0..4 {
        let ln_tail = ln_upper_tail(z);
        // d/dz ln Q(z) = -phi(z) / Q(z)
        let slope = (ln_phi(z) - ln_tail).exp();
        let step = (ln_tail - ln_q) / slope;
        z += step;
        if z < 0.0 {
            z = 0.0;
        }
        if step.abs() <= 1e-15 * z.max(1.0) {
            break;
        }
    }
    Ok(ZScore(z))
}

/// `f64` convenience over [`two_sided_z`] for internal callers.
pub(crate) fn z_for(p: f64) -> Result<f64> {
    two_sided_z(Probability::new(p)?).map(ZScore::get)
}

/// `f64` convenience over [`two_sided_p`] for internal callers.
pub(crate) fn p_for(z: f64) -> Result<f64> {
    Ok(two_sided_p(ZScore::new(z)?).get())
}

fn ln_phi(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// `ln P(N(0,1) >= z)` for `z >= 0`.
fn ln_upper_tail(z: f64) -> f64 {
    if z < ASYMPTOTIC_Z {
        (0.5 * libm::erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        let inv = 1.0 / (z * z);
        let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
        ln_phi(z) - z.ln() + series.ln()
    }
}

/// Acklam's rational approximation to the lower-tail normal quantile,
/// relative error about 1e-9; used only as the starting point for Newton.
fn acklam_lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Terms summed directly before the Euler-Maclaurin tail takes over.
pub const ZETA_CUTOFF: u64 = 100_000;

fn check_exponent(v: f64) -> Result<()> {
    if v > 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::DivergentSeries { v })
    }
}

/// Neumaier-compensated sum of `t^-v` for `t` in `from..=to`, smallest
/// terms first.
fn direct_sum(from: u64, to: u64, v: f64) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for t in (from..=to).rev() {
        let term = (t as f64).powf(-v);
        let next = sum + term;
        if sum.abs() >= term.abs() {
            carry += (sum - next) + term;
        } else {
            carry += (term - next) + sum;
        }
        sum = next;
    }
    sum + carry
}

/// Euler-Maclaurin estimate of `sum_{t >= m} t^-v`, accurate for large `m`.
fn euler_maclaurin_tail(m: u64, v: f64) -> f64 {
    let m = m as f64;
    let f = m.powf(-v);
    m * f / (v - 1.0) + 0.5 * f + v / 12.0 * f / m
        - v * (v + 1.0) * (v + 2.0) / 720.0 * f / (m * m * m)
}

/// `sum_{t > s} t^-v`.
pub fn pseries_tail(s: u64, v: f64) -> Result<f64> {
    check_exponent(v)?;
    let first = s.saturating_add(1);
    if first >= ZETA_CUTOFF {
        Ok(euler_maclaurin_tail(first, v))
    } else {
        Ok(direct_sum(first, ZETA_CUTOFF - 1, v) + euler_maclaurin_tail(ZETA_CUTOFF, v))
    }
}

/// Riemann zeta for real `v > 1`.
pub fn zeta(v: f64) -> Result<f64> {
    pseries_tail(0, v)
}

/// `h(s, v) = sum_{t=1..s} t^-v`.
pub fn pseries_head(s: u64, v: f64) -> Result<f64> {
    check_exponent(v)?;
    if s < ZETA_CUTOFF {
        Ok(direct_sum(1, s, v))
    } else {
        Ok(zeta(v)? - pseries_tail(s, v)?)
    }
}

/// `sum_{t=from..=to} t^-v` without touching terms outside the range when
/// the range is short.
pub(crate) fn pseries_range(from: u64, to: u64, v: f64) -> Result<f64> {
    check_exponent(v)?;
    if to < from {
        return Ok(0.0);
    }
    if to - from < ZETA_CUTOFF {
        Ok(direct_sum(from, to, v))
    } else {
        Ok(pseries_tail(from - 1, v)? - pseries_tail(to, v)?)
    }
}
