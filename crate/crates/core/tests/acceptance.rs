//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repsig::{
    baseline_z, corollary_sum, run_stream, simulate, two_sided_z, worst_case_alpha, Error,
    Probability, RepetitionPolicy, SimulationConfig, SpendingSchedule, StreamModel, TestPlan,
};

const ALPHA: f64 = 0.05;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

fn geometric(w: f64, u: f64) -> TestPlan {
    TestPlan::new(
        SpendingSchedule::geometric(ALPHA, w).unwrap(),
        RepetitionPolicy::fraction(u).unwrap(),
    )
}

fn fixed_level() -> Outcome {
    let plan = TestPlan::new(
        SpendingSchedule::custom(ALPHA, vec![ALPHA]).unwrap(),
        RepetitionPolicy::constant(1).unwrap(),
    );
    let z = plan.z_threshold_at(1).map_err(|e| e.to_string())?;
    ensure((z - 1.96).abs() <= 5e-4, || format!("z = {z}"))?;
    Ok(format!("z = {z:.6}"))
}

fn halving_example() -> Outcome {
    let k_max = 20;
    let n = 1_usize << k_max;
    let deltas: Vec<f64> = (1..=n as u64)
        .map(|t| {
            let ceil_lg = 64 - (t - 1).leading_zeros();
            ALPHA / 2f64.powi(ceil_lg as i32 + 1)
        })
        .collect();
    let rs: Vec<u64> = (1..=n as u64).map(|t| t.div_ceil(2)).collect();
    let mut worst = 0.0_f64;
    for k in 0..=k_max {
        let len = 1_usize << k;
        let start = Instant::now();
        let est = worst_case_alpha(&deltas[..len], &rs[..len], len as u64, 0.0)
            .map_err(|e| e.to_string())?;
        let expected = ALPHA * (1.0 - 2f64.powi(-(k + 1)));
        let err = (est.collected - expected).abs();
        ensure(err <= 1e-12, || format!("k = {k}: {} vs {expected}", est.collected))?;
        worst = worst.max(err);
        if k == k_max {
            let took = within_time(start, Duration::from_secs(5))?;
            return Ok(format!("max error {worst:.1e}, k = 20 in {took:.2?}"));
        }
    }
    unreachable!()
}

fn reported_minima() -> Outcome {
    let mut parts = Vec::new();
    for (u, reported) in [(0.05, 3.3), (0.1, 3.1), (0.5, 2.6)] {
        let start = Instant::now();
        let horizon = 10_000;
        let (argmin, z) = geometric(1e-3, u).min_z(horizon).map_err(|e| e.to_string())?;
        within_time(start, Duration::from_secs(1))?;
        ensure(argmin < horizon, || format!("u = {u}: argmin at the horizon"))?;
        let closed = two_sided_z(Probability::new(ALPHA * u / std::f64::consts::E).unwrap())
            .unwrap()
            .get();
        ensure((z - reported).abs() <= 0.1, || format!("u = {u}: z = {z}"))?;
        ensure((z - closed).abs() <= 0.05, || format!("u = {u}: z = {z}, closed form {closed}"))?;
        parts.push(format!("u={u}: {z:.4} (closed {closed:.4})"));
    }
    Ok(parts.join(", "))
}

fn w_scaling() -> Outcome {
    let start = Instant::now();
    let (_, a) = geometric(1e-3, 0.1).min_z(10_000).map_err(|e| e.to_string())?;
    let (_, b) = geometric(1e-5, 0.1).min_z(1_000_000).map_err(|e| e.to_string())?;
    let took = within_time(start, Duration::from_secs(10))?;
    ensure((a - b).abs() <= 0.05, || format!("{a} vs {b}"))?;
    Ok(format!("{a:.4} vs {b:.4} in {took:.2?}"))
}

fn monte_carlo_null() -> Outcome {
    let policy = || RepetitionPolicy::fraction(0.1).unwrap();
    let plans = [
        TestPlan::new(SpendingSchedule::geometric(ALPHA, 0.01).unwrap(), policy()),
        TestPlan::new(SpendingSchedule::pseries(ALPHA, 1.2).unwrap(), policy()),
        TestPlan::new(SpendingSchedule::headless_pseries(ALPHA, 1.1, 100).unwrap(), policy()),
    ];
    let config = SimulationConfig {
        replications: 100_000,
        horizon: 10_000,
        seed: 20_241,
    };
    let mut worst = 0.0_f64;
    for plan in &plans {
        for model in [StreamModel::IidUniformNull, StreamModel::BrownianNull] {
            let report = simulate(plan, model, config).map_err(|e| e.to_string())?;
            let hi = report.ci95[1];
            ensure(hi <= ALPHA + 0.005, || {
                format!("{} {:?}: upper edge {hi}", plan.label(), model)
            })?;
            worst = worst.max(hi);
        }
    }
    Ok(format!("6 runs, largest upper edge {worst:.5}"))
}

fn calibration() -> Outcome {
    let plan = TestPlan::new(
        SpendingSchedule::custom(ALPHA, vec![ALPHA]).unwrap(),
        RepetitionPolicy::constant(1).unwrap(),
    );
    let config = SimulationConfig {
        replications: 100_000,
        horizon: 1,
        seed: 7,
    };
    let report = simulate(&plan, StreamModel::IidUniformNull, config).map_err(|e| e.to_string())?;
    let se = (ALPHA * (1.0 - ALPHA) / config.replications as f64).sqrt();
    let p = report.stop_probability;
    ensure((p - ALPHA).abs() <= 3.0 * se, || format!("{p} is more than 3 SE from 0.05"))?;
    Ok(format!("{p:.5} (SE {se:.5})"))
}

fn divergence_guard() -> Outcome {
    for v in [1.0, 0.9] {
        match SpendingSchedule::pseries(ALPHA, v) {
            Err(e @ Error::DivergentSeries { .. }) => {
                ensure(e.to_string().contains("divergent series"), || e.to_string())?
            }
            other => return Err(format!("v = {v}: {other:?}")),
        }
    }
    SpendingSchedule::pseries(ALPHA, 1.0001).map_err(|e| format!("v = 1.0001: {e}"))?;
    Ok("v = 1.0, 0.9 rejected; v = 1.0001 accepted".into())
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u64>) {
    let n = rng.gen_range(1..=200);
    let mut r = 1;
    let mut deltas = Vec::with_capacity(n);
    let mut rs = Vec::with_capacity(n);
    for _ in 0..n {
        deltas.push(match rng.gen_range(0..4) {
            0 => rng.gen_range(0.0..1.0),
            1 => 0.01,
            _ => rng.gen_range(0.0..0.05),
        });
        if rng.gen_bool(0.3) {
            r += rng.gen_range(1..3);
        }
        rs.push(r);
    }
    (deltas, rs)
}

fn dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000 {
        let (deltas, rs) = random_instance(&mut rng);
        let n = deltas.len() as u64;
        let est = worst_case_alpha(&deltas, &rs, n, 0.0).map_err(|e| e.to_string())?;
        let bound = deltas.iter().zip(&rs).map(|(d, &r)| d / r as f64).sum::<f64>();
        ensure(est.collected <= bound, || format!("instance {i}: {} > {bound}", est.collected))?;
        ensure(est.collected <= corollary_sum(&deltas, &rs), || format!("instance {i}"))?;

        let ones = vec![1; deltas.len()];
        let unit = worst_case_alpha(&deltas, &ones, n, 0.0).map_err(|e| e.to_string())?;
        let mut sum = 0.0;
        for d in &deltas {
            sum += d;
        }
        ensure(unit.collected == sum.min(1.0), || {
            format!("instance {i}: r = 1 gave {} vs {}", unit.collected, sum.min(1.0))
        })?;
    }
    Ok("1000 instances".into())
}

fn random_plan(rng: &mut ChaCha8Rng) -> TestPlan {
    let schedule = match rng.gen_range(0..3) {
        0 => SpendingSchedule::geometric(ALPHA, 10f64.powf(rng.gen_range(-4.0..-0.5))),
        1 => SpendingSchedule::pseries(ALPHA, rng.gen_range(1.05..2.5)),
        _ => SpendingSchedule::headless_pseries(ALPHA, rng.gen_range(1.05..2.0), rng.gen_range(0..50)),
    };
    let policy = if rng.gen_bool(0.75) {
        RepetitionPolicy::fraction(rng.gen_range(0.02..1.0))
    } else {
        RepetitionPolicy::constant(rng.gen_range(1..4))
    };
    TestPlan::new(schedule.unwrap(), policy.unwrap())
}

/// min{t : |{k <= t : p_k <= delta_k}| >= r_t}, evaluated directly.
fn stop_by_definition(plan: &TestPlan, ps: &[f64]) -> Option<u64> {
    let mut hits = 0;
    for (i, &p) in ps.iter().enumerate() {
        let t = i as u64 + 1;
        if p <= plan.schedule.alpha_at(t).value * plan.policy.r_at(t) as f64 {
            hits += 1;
        }
        if hits >= plan.policy.r_at(t) {
            return Some(t);
        }
    }
    None
}

fn monitor_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut stops = 0;
    for i in 0..10_000 {
        let plan = random_plan(&mut rng);
        let len = rng.gen_range(0..=1000);
        let mix = rng.gen_range(0.0..0.3);
        let ps: Vec<f64> = (1..=len)
            .map(|t| {
                if rng.gen_bool(0.02) {
                    // exactly at the threshold
                    plan.threshold_at(t).delta
                } else if rng.gen_bool(mix) {
                    rng.gen_range(0.0..1e-3)
                } else {
                    rng.gen_range(0.0..=1.0)
                }
            })
            .collect();
        let expected = stop_by_definition(&plan, &ps);
        let (decision, _) = run_stream(plan.clone(), &ps).map_err(|e| e.to_string())?;
        let got = decision.is_stop().then(|| decision.t());
        ensure(got == expected, || format!("stream {i} ({}): {got:?} vs {expected:?}", plan.label()))?;
        stops += u32::from(got.is_some());
    }
    Ok(format!("10000 streams, {stops} stopped"))
}

/// Minimum of the baseline boundary over `1..=horizon`.
fn baseline_min(rho: f64, horizon: u64) -> f64 {
    (1..=horizon)
        .map(|t| baseline_z(t, rho, ALPHA).unwrap())
        .fold(f64::INFINITY, f64::min)
}

fn comparison() -> Outcome {
    let horizon = 10_000;
    let (argmin, lenient) = geometric(1e-3, 0.2).min_z(horizon).map_err(|e| e.to_string())?;

    // rho placing the baseline minimum at the same decision point
    let (mut lo, mut hi) = (1e-6_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let t_best = (1..=horizon)
            .min_by(|&a, &b| baseline_z(a, mid, ALPHA).unwrap().total_cmp(&baseline_z(b, mid, ALPHA).unwrap()))
            .unwrap();
        if t_best > argmin {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let matched = (lo * hi).sqrt();

    let mut grid = vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, matched];
    grid.sort_by(f64::total_cmp);
    let mut lowest = f64::INFINITY;
    for &rho in &grid {
        let b = baseline_min(rho, horizon);
        ensure(lenient < b, || format!("u = 0.2 min {lenient} not below baseline {b} at rho = {rho}"))?;
        lowest = lowest.min(b);
    }

    let (_, similar) = geometric(1e-3, 0.15).min_z(horizon).map_err(|e| e.to_string())?;
    let b = baseline_min(matched, horizon);
    ensure((similar - b).abs() <= 0.15, || format!("u = 0.15 min {similar} vs baseline {b}"))?;
    Ok(format!(
        "u=0.2 min {lenient:.4} < baseline min {lowest:.4}; u=0.15 min {similar:.4} vs {b:.4} (rho {matched:.4})"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("fixed-level recovery", fixed_level),
        ("halving example", halving_example),
        ("reported minima", reported_minima),
        ("w-scaling", w_scaling),
        ("Monte Carlo type-1 control", monte_carlo_null),
        ("calibration", calibration),
        ("divergent series guard", divergence_guard),
        ("corollary dominance", dominance),
        ("monitor definition oracle", monitor_oracle),
        ("baseline comparison", comparison),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
