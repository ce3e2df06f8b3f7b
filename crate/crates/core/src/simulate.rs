//! Seeded Monte Carlo verification of test plans.
//!
//! Every replication draws from its own ChaCha stream selected by
//! `(seed, replication index)`, and the aggregate is an integer reduction, so
//! reports are bit-identical whatever the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::{p_for, z_for};
use crate::plan::TestPlan;

/// How p-values are generated at successive decision points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StreamModel {
    /// Independent uniform p-values.
    IidUniformNull,
    /// Two-sided p-value of the running z statistic of a zero-mean Gaussian
    /// random walk; successive p-values are strongly dependent.
    BrownianNull,
    /// As `BrownianNull` with mean `mu` per observation and `n_per_point`
    /// observations between decision points. A modelling choice of this
    /// tool, not a validated alternative.
    BrownianDrift {
        mu: f64,
        #[serde(default = "one")]
        n_per_point: u64,
    },
}

fn one() -> u64 {
    1
}

impl StreamModel {
    fn check(&self) -> Result<()> {
        match *self {
            Self::BrownianDrift { mu, n_per_point } => {
                if !mu.is_finite() {
                    return Err(invalid("mu", "must be finite"));
                }
                if n_per_point == 0 {
                    return Err(invalid("n_per_point", "must be at least 1"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn drift(&self) -> (f64, u64) {
        match *self {
            Self::BrownianDrift { mu, n_per_point } => (mu, n_per_point),
            _ => (0.0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub replications: u64,
    pub horizon: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub plan: TestPlan,
    pub model: StreamModel,
    pub replications: u64,
    pub horizon: u64,
    pub seed: u64,
    /// Fraction of replications that stopped by `horizon`.
    pub stop_probability: f64,
    /// Wilson score interval.
    pub ci95: [f64; 2],
    /// `None` when no replication stopped.
    pub mean_stop_time_given_stop: Option<f64>,
}

impl SimulationReport {
    pub fn standard_error(&self) -> f64 {
        let p = self.stop_probability;
        (p * (1.0 - p) / self.replications as f64).sqrt()
    }
}

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> [f64; 2] {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    [lo, hi]
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed used for the `index`-th plan of a sweep.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Largest table of precomputed thresholds; later points are computed on
/// demand.
const TABLE_LIMIT: u64 = 1 << 22;

/// Thresholds for `1..=horizon` laid out for the inner loop.
struct ThresholdTable<'a> {
    plan: &'a TestPlan,
    /// Observations per decision point for walk models; `None` for iid.
    walk_n: Option<u64>,
    deltas: Vec<f64>,
    /// Smallest |running sum| that is significant at `t`:
    /// `z(delta_t) sqrt(t n)`, infinite where `delta_t` is zero.
    sum_bounds: Vec<f64>,
    rs: Vec<u64>,
}

impl<'a> ThresholdTable<'a> {
    fn new(plan: &'a TestPlan, horizon: u64, walk_n: Option<u64>) -> Self {
        let n = horizon.min(TABLE_LIMIT);
        let mut table = Self {
            plan,
            walk_n,
            deltas: Vec::with_capacity(n as usize),
            sum_bounds: Vec::new(),
            rs: Vec::with_capacity(n as usize),
        };
        for t in 1..=n {
            let th = plan.threshold_at(t);
            table.deltas.push(th.delta);
            table.rs.push(th.r);
            if let Some(per_point) = walk_n {
                table.sum_bounds.push(sum_bound(th.delta, t, per_point));
            }
        }
        table
    }

    #[inline]
    fn get(&self, t: u64) -> (f64, u64) {
        match self.deltas.get((t - 1) as usize) {
            Some(&d) => (d, self.rs[(t - 1) as usize]),
            None => {
                let th = self.plan.threshold_at(t);
                (th.delta, th.r)
            }
        }
    }

    #[inline]
    fn walk_bound(&self, t: u64) -> (f64, u64) {
        match self.sum_bounds.get((t - 1) as usize) {
            Some(&b) => (b, self.rs[(t - 1) as usize]),
            None => {
                let th = self.plan.threshold_at(t);
                (sum_bound(th.delta, t, self.walk_n.unwrap_or(1)), th.r)
            }
        }
    }
}

/// p(|S| / sqrt(t n)) <= delta exactly when |S| >= z(delta) sqrt(t n).
fn sum_bound(delta: f64, t: u64, n: u64) -> f64 {
    if delta == 0.0 {
        f64::INFINITY
    } else {
        z_for(delta).expect("thresholds lie in [0, 1]") * ((t * n) as f64).sqrt()
    }
}

/// Stop time of one replication, or `None` if it ran to `horizon`.
fn replicate(table: &ThresholdTable<'_>, model: StreamModel, horizon: u64, seed: u64, rep: u64) -> Option<u64> {
    let mut rng = replication_rng(seed, rep);
    let mut hits = 0_u64;
    match model {
        StreamModel::IidUniformNull => {
            for t in 1..=horizon {
                let (delta, r) = table.get(t);
                // in (0, 1], so a zero threshold is never met
                let p = 1.0 - rng.gen::<f64>();
                hits += u64::from(p <= delta);
                if hits >= r {
                    return Some(t);
                }
            }
        }
        StreamModel::BrownianNull | StreamModel::BrownianDrift { .. } => {
            let (mu, n) = model.drift();
            let step_mean = mu * n as f64;
            let step_sd = (n as f64).sqrt();
            let mut sum = 0.0_f64;
            for t in 1..=horizon {
                let (bound, r) = table.walk_bound(t);
                let noise: f64 = rng.sample(StandardNormal);
                sum += step_mean + step_sd * noise;
                hits += u64::from(sum.abs() >= bound);
                if hits >= r {
                    return Some(t);
                }
            }
        }
    }
    None
}

/// The p-values replication `rep` would see, for replaying through the
/// monitor.
pub fn sample_stream(model: StreamModel, seed: u64, rep: u64, len: u64) -> Result<Vec<f64>> {
    model.check()?;
    let mut rng = replication_rng(seed, rep);
    let (mu, n) = model.drift();
    let mut sum = 0.0_f64;
    (1..=len)
        .map(|t| match model {
            StreamModel::IidUniformNull => Ok(1.0 - rng.gen::<f64>()),
            _ => {
                let noise: f64 = rng.sample(StandardNormal);
                sum += mu * n as f64 + (n as f64).sqrt() * noise;
                p_for(sum.abs() / ((t * n) as f64).sqrt())
            }
        })
        .collect()
}

/// Runs `config.replications` independent streams of `model` against `plan`.
pub fn simulate(plan: &TestPlan, model: StreamModel, config: SimulationConfig) -> Result<SimulationReport> {
    if config.replications == 0 {
        return Err(invalid("replications", "must be at least 1"));
    }
    if config.horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    model.check()?;
    let walk_n = match model {
        StreamModel::IidUniformNull => None,
        _ => Some(model.drift().1),
    };
    let table = ThresholdTable::new(plan, config.horizon, walk_n);

    let (stops, stop_time_sum) = (0..config.replications)
        .into_par_iter()
        .map(|rep| match replicate(&table, model, config.horizon, config.seed, rep) {
            Some(t) => (1_u64, u128::from(t)),
            None => (0, 0),
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    Ok(SimulationReport {
        plan: plan.clone(),
        model,
        replications: config.replications,
        horizon: config.horizon,
        seed: config.seed,
        stop_probability: stops as f64 / config.replications as f64,
        ci95: wilson_interval(stops, config.replications),
        mean_stop_time_given_stop: (stops > 0).then(|| stop_time_sum as f64 / stops as f64),
    })
}

/// [`simulate`] for each plan, the `i`-th with seed
/// `derive_seed(config.seed, i)`.
pub fn sweep(plans: &[TestPlan], model: StreamModel, config: SimulationConfig) -> Result<Vec<SimulationReport>> {
    plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            let seeded = SimulationConfig {
                seed: derive_seed(config.seed, i as u64),
                ..config
            };
            simulate(plan, model, seeded)
        })
        .collect()
}
