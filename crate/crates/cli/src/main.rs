//! `repsig`: build, inspect, monitor and simulate repeated-significance test
//! plans from the command line.
//!
//! Exit codes: 0 success (or a significant stop in `monitor`), 2 usage or
//! validation error, 3 `monitor` input ended without a stop, 1 I/O failure.

mod format;

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use repsig::{
    baseline_z, corollary_sum, simulate, validate_plan, worst_case_alpha, Decision, MonitorState,
    SimulationConfig, StreamModel, TestPlan,
};

use format::{log_grid, num};

/// Seed used by `simulate` when neither `--seed` nor `REPSIG_SEED` is given.
const DEFAULT_SEED: u64 = 20_240_521;

#[derive(Parser)]
#[command(name = "repsig", version, about = "Unbounded sequential test plans built on repeated significance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold table `t,alpha_t,r_t,delta_t,z_t` for t = 1..t_max.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        t_max: u64,
    },
    /// Required z score on a log-spaced grid; repeat --plan to overlay series.
    Curve {
        /// Plan JSON, inline or a file path. May be repeated.
        #[arg(long = "plan", required = true)]
        plans: Vec<String>,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, default_value_t = 1_000_000)]
        t_max: u64,
        /// Grid density cap.
        #[arg(long, default_value_t = 400)]
        points_per_decade: u32,
    },
    /// Worst-case type-1 error through a horizon, as JSON.
    Alpha {
        #[arg(long, required_unless_present = "instance", conflicts_with = "instance")]
        plan: Option<String>,
        /// Explicit {"deltas": [...], "rs": [...]} instead of a plan; the
        /// horizon is its length.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, default_value_t = 10_000)]
        horizon: u64,
    },
    /// Reads one p-value per line from stdin and applies the stopping rule.
    Monitor {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo stop probability under a stream model, as JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModelArg::Iid)]
        model: ModelArg,
        /// Mean per observation for `--model drift`.
        #[arg(long, required_if_eq("model", "drift"))]
        mu: Option<f64>,
        #[arg(long, default_value_t = 1)]
        n_per_point: u64,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 10_000)]
        horizon: u64,
        #[arg(long, env = "REPSIG_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Plan boundary next to the running-average baseline boundary.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Baseline mixing parameters, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        t_max: u64,
        #[arg(long, default_value_t = 400)]
        points_per_decade: u32,
    },
}

#[derive(Args)]
struct Common {
    /// Plan JSON, inline or a file path.
    #[arg(long)]
    plan: String,
    /// Output path, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Iid,
    Brownian,
    Drift,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Instance {
    deltas: Vec<f64>,
    rs: Vec<u64>,
}

#[derive(Serialize)]
struct AlphaReport {
    collected: f64,
    tail_bound: f64,
    horizon: u64,
    corollary_bound: f64,
}

enum Failure {
    Usage(String),
    Io(io::Error),
    Exhausted,
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<repsig::Error> for Failure {
    fn from(e: repsig::Error) -> Self {
        Self::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Exhausted) => ExitCode::from(3),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Plan { common, t_max } => cmd_plan(&common, t_max),
        Command::Curve {
            plans,
            out,
            t_max,
            points_per_decade,
        } => cmd_curve(&plans, &out, t_max, points_per_decade),
        Command::Alpha {
            plan,
            instance,
            out,
            horizon,
        } => cmd_alpha(plan.as_deref(), instance.as_deref(), &out, horizon),
        Command::Monitor { common } => cmd_monitor(&common),
        Command::Simulate {
            common,
            model,
            mu,
            n_per_point,
            reps,
            horizon,
            seed,
        } => {
            let model = match model {
                ModelArg::Iid => StreamModel::IidUniformNull,
                ModelArg::Brownian => StreamModel::BrownianNull,
                ModelArg::Drift => StreamModel::BrownianDrift {
                    mu: mu.unwrap_or_default(),
                    n_per_point,
                },
            };
            let config = SimulationConfig {
                replications: reps,
                horizon,
                seed,
            };
            cmd_simulate(&common, model, config)
        }
        Command::Compare {
            common,
            rho,
            t_max,
            points_per_decade,
        } => cmd_compare(&common, &rho, t_max, points_per_decade),
    }
}

/// Inline JSON when the argument starts with `{`, otherwise a file path.
fn read_json<T: for<'de> Deserialize<'de>>(arg: &str, what: &str) -> Result<T, Failure> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| Failure::Usage(format!("cannot read {what} {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid {what}: {e}")))
}

/// Parses a plan and reports its findings on stderr; error findings abort.
fn load_plan(arg: &str) -> Result<TestPlan, Failure> {
    let plan: TestPlan = read_json(arg, "plan")?;
    let findings = validate_plan(&plan);
    for f in &findings {
        eprintln!("{f}");
    }
    if repsig::has_errors(&findings) {
        return Err(Failure::Usage(format!("plan {} is malformed", plan.label())));
    }
    Ok(plan)
}

fn open_out(path: &str) -> Result<Box<dyn Write>, Failure> {
    Ok(if path == "-" {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(File::create(PathBuf::from(path))?))
    })
}

fn require_positive(name: &str, value: u64) -> Outcome {
    if value == 0 {
        return Err(Failure::Usage(format!("--{name} must be at least 1")));
    }
    Ok(())
}

/// Empty when the threshold underflowed to zero.
fn z_cell(plan: &TestPlan, t: u64) -> String {
    plan.z_threshold_at(t).map(num).unwrap_or_default()
}

fn cmd_plan(common: &Common, t_max: u64) -> Outcome {
    require_positive("t-max", t_max)?;
    let plan = load_plan(&common.plan)?;
    let mut out = open_out(&common.out)?;
    writeln!(out, "t,alpha_t,r_t,delta_t,z_t")?;
    for t in 1..=t_max {
        let th = plan.threshold_at(t);
        writeln!(
            out,
            "{t},{},{},{},{}",
            num(th.alpha_t),
            th.r,
            num(th.delta),
            z_cell(&plan, t)
        )?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_curve(plan_args: &[String], out: &str, t_max: u64, per_decade: u32) -> Outcome {
    require_positive("t-max", t_max)?;
    require_positive("points-per-decade", u64::from(per_decade))?;
    let plans = plan_args
        .iter()
        .map(|a| load_plan(a))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = log_grid(t_max, per_decade);
    let mut out = open_out(out)?;
    writeln!(out, "series,t,delta,z")?;
    for plan in &plans {
        let label = plan.label();
        for &t in &grid {
            let delta = plan.threshold_at(t).delta;
            writeln!(out, "{label},{t},{},{}", num(delta), z_cell(plan, t))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_alpha(plan: Option<&str>, instance: Option<&str>, out: &str, horizon: u64) -> Outcome {
    let report = if let Some(arg) = instance {
        let inst: Instance = read_json(arg, "instance")?;
        if inst.deltas.len() != inst.rs.len() {
            return Err(Failure::Usage("instance deltas and rs differ in length".into()));
        }
        let n = inst.deltas.len() as u64;
        let est = worst_case_alpha(&inst.deltas, &inst.rs, n, 0.0)?;
        AlphaReport {
            collected: est.collected,
            tail_bound: est.tail_bound,
            horizon: est.horizon,
            corollary_bound: corollary_sum(&inst.deltas, &inst.rs),
        }
    } else {
        require_positive("horizon", horizon)?;
        let plan = load_plan(plan.expect("clap requires --plan without --instance"))?;
        let est = plan.worst_case_alpha(horizon)?;
        AlphaReport {
            collected: est.collected,
            tail_bound: est.tail_bound,
            horizon: est.horizon,
            corollary_bound: plan.corollary_bound(horizon),
        }
    };
    let mut out = open_out(out)?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn cmd_monitor(common: &Common) -> Outcome {
    let plan = load_plan(&common.plan)?;
    let mut state = MonitorState::new(plan)?;
    let mut out = open_out(&common.out)?;
    writeln!(out, "t,p,delta_t,hit,hits,r_t,decision")?;
    for (i, line) in io::stdin().lock().lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let p: f64 = text
            .parse()
            .map_err(|_| Failure::Usage(format!("line {lineno}: {text:?} is not a number")))?;
        let threshold = state.next_threshold();
        let before = state.hits();
        let decision = state
            .observe(p)
            .map_err(|e| Failure::Usage(format!("line {lineno}: {e}")))?;
        let (t, hits, word) = match decision {
            Decision::Continue { t, hits, .. } => (t, hits, "continue"),
            Decision::StopSignificant { t, hits } => (t, hits, "stop_significant"),
        };
        writeln!(
            out,
            "{t},{},{},{},{hits},{},{word}",
            num(p),
            num(threshold.delta),
            u8::from(hits > before),
            threshold.r
        )?;
        out.flush()?;
        if decision.is_stop() {
            return Ok(());
        }
    }
    Err(Failure::Exhausted)
}

fn cmd_simulate(common: &Common, model: StreamModel, config: SimulationConfig) -> Outcome {
    let plan = load_plan(&common.plan)?;
    if let StreamModel::BrownianDrift { .. } = model {
        eprintln!("note: the drift model is an illustrative alternative chosen by this tool");
    }
    let report = simulate(&plan, model, config)?;
    let mut out = open_out(&common.out)?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn cmd_compare(common: &Common, rhos: &[f64], t_max: u64, per_decade: u32) -> Outcome {
    require_positive("t-max", t_max)?;
    require_positive("points-per-decade", u64::from(per_decade))?;
    if let Some(bad) = rhos.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Failure::Usage(format!("--rho values must be positive, got {bad}")));
    }
    let plan = load_plan(&common.plan)?;
    let alpha = plan.alpha();
    let mut out = open_out(&common.out)?;
    write!(out, "t,z_repsig")?;
    for rho in rhos {
        write!(out, ",z_baseline(rho={})", num(*rho))?;
    }
    writeln!(out)?;
    for t in log_grid(t_max, per_decade) {
        write!(out, "{t},{}", z_cell(&plan, t))?;
        for &rho in rhos {
            write!(out, ",{}", num(baseline_z(t, rho, alpha)?))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
