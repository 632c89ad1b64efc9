use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use monoflow_cli::config::{self, BetaConfig, Mode, RunConfig};
use monoflow_cli::runner;
use monoflow_cli::CliError;

/// Damped-flow and implicit solvers for monotone equations: runs the
/// bundled benchmark presets (or a custom affine operator from a config
/// file), writing a trajectory CSV and a JSON summary per run.
///
/// Exit codes: 0 success, 2 validation failure, 3 numerical failure.
/// MONOFLOW_THREADS caps sweep parallelism.
#[derive(Parser, Debug)]
#[command(name = "monoflow", version)]
struct Args {
    /// Config file path, or inline JSON (starts with '{').
    #[arg(long, conflicts_with = "preset")]
    config: Option<String>,

    /// Built-in problem: example1 (constrained quadratic) or example2
    /// (bilinear saddle).
    #[arg(long)]
    preset: Option<String>,

    /// Saddle preset size (example2 only).
    #[arg(long)]
    n: Option<usize>,

    /// continuous | discrete.
    #[arg(long)]
    mode: Option<String>,

    /// Damping exponent in [0, 1].
    #[arg(long)]
    r: Option<f64>,

    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long)]
    theta: Option<f64>,

    /// Slack of the exponential schedule.
    #[arg(long)]
    delta: Option<f64>,

    /// Schedule: `constant[:c]` | `power[:p[,c]]` | `exponential`.
    #[arg(long)]
    beta: Option<String>,

    /// Continuous final time T.
    #[arg(long)]
    horizon: Option<f64>,

    /// Discrete iteration budget.
    #[arg(long)]
    kmax: Option<usize>,

    /// Output directory (default monoflow-out).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Batch over one axis: AXIS=v1,v2,... with AXIS one of
    /// r, theta, alpha, delta, beta-family.
    #[arg(long)]
    sweep: Option<String>,

    /// Skip the admissibility and growth-condition gates.
    #[arg(long)]
    force: bool,

    /// Seed for the randomized monotonicity probe in the summary.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_beta(text: &str) -> Result<BetaConfig, CliError> {
    let (family, rest) = match text.split_once(':') {
        Some((f, r)) => (f, Some(r)),
        None => (text, None),
    };
    let nums: Vec<f64> = match rest {
        None => Vec::new(),
        Some(r) => r
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Validation(vec![format!("bad --beta arguments {text:?}: {e}")]))?,
    };
    match family {
        "constant" => Ok(BetaConfig::Constant { c: nums.first().copied().unwrap_or(1.0) }),
        "power" => Ok(BetaConfig::Power {
            p: nums.first().copied().unwrap_or(1.0),
            c: nums.get(1).copied().unwrap_or(1.0),
        }),
        "exponential" => Ok(BetaConfig::Exponential {}),
        other => Err(CliError::Validation(vec![format!(
            "unknown beta family {other:?} (use constant, power, or exponential; tabulated needs a config file)"
        )])),
    }
}

fn config_from_flags(args: &Args) -> Result<RunConfig, CliError> {
    let mut missing = Vec::new();
    if args.preset.is_none() {
        missing.push("--preset (or --config)".to_string());
    }
    if args.mode.is_none() {
        missing.push("--mode".to_string());
    }
    if args.r.is_none() {
        missing.push("--r".to_string());
    }
    if args.alpha.is_none() {
        missing.push("--alpha".to_string());
    }
    if args.theta.is_none() {
        missing.push("--theta".to_string());
    }
    if !missing.is_empty() {
        return Err(CliError::Validation(
            missing.into_iter().map(|m| format!("missing required flag {m}")).collect(),
        ));
    }
    let mode = match args.mode.as_deref().unwrap() {
        "continuous" => Mode::Continuous,
        "discrete" => Mode::Discrete,
        other => {
            return Err(CliError::Validation(vec![format!(
                "unknown mode {other:?} (expected continuous or discrete)"
            )]))
        }
    };
    let beta = match &args.beta {
        Some(text) => parse_beta(text)?,
        None => BetaConfig::Constant { c: 1.0 },
    };
    let cfg = RunConfig {
        preset: args.preset.clone(),
        n: args.n,
        operator: None,
        mode,
        r: args.r.unwrap(),
        alpha: args.alpha.unwrap(),
        theta: args.theta.unwrap(),
        delta: args.delta.unwrap_or(0.0),
        t0: 1.0,
        k0: 1,
        beta,
        horizon: args.horizon,
        kmax: args.kmax,
        out: args.out.clone(),
        seed: args.seed.unwrap_or(0),
        force: args.force,
        integrator: None,
        resolvent: None,
        z0: None,
        zdot0: None,
        z1: None,
    };
    config::validate(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run_main(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run_main(args: &Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(source) => {
            let mut cfg = config::load_config(source)?;
            if let Some(out) = &args.out {
                cfg.out = Some(out.clone());
            }
            if args.force {
                cfg.force = true;
            }
            cfg
        }
        None => config_from_flags(args)?,
    };
    if cfg.out.is_none() {
        cfg.out = Some(PathBuf::from("monoflow-out"));
    }

    match &args.sweep {
        Some(spec) => {
            let (axis, values) = spec.split_once('=').ok_or_else(|| {
                CliError::Validation(vec![format!("--sweep expects AXIS=v1,v2,... got {spec:?}")])
            })?;
            let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
            let summary = runner::sweep(&cfg, axis, &values)?;
            println!("sweep over {axis}: {} runs", summary.rows.len());
            for row in &summary.rows {
                match (&row.terminal_norm_v, &row.norm_v_slope) {
                    (Some(v), Some(s)) => println!(
                        "  {axis}={:<12} {:<8} terminal |V| = {v:.3e}, slope = {s:+.3}",
                        row.value, row.status
                    ),
                    _ => println!("  {axis}={:<12} {:<8} {}", row.value, row.status,
                        row.messages.as_ref().map_or(String::new(), |m| m.join("; "))),
                }
            }
            Ok(())
        }
        None => {
            let artifacts = runner::run(&cfg)?;
            println!("wrote {}", artifacts.csv_path.display());
            println!("wrote {}", artifacts.summary_path.display());
            if let Some(t) = &artifacts.summary.terminal {
                println!(
                    "terminal tau = {:.6e}, |V| = {:.6e} ({} samples, {} steps, {:.2} s)",
                    t.tau,
                    t.norm_v,
                    artifacts.summary.samples,
                    artifacts.summary.total_steps,
                    artifacts.summary.wall_time_s
                );
            }
            match artifacts.numerical_error() {
                Some(msg) => Err(CliError::Numerical(msg.to_string())),
                None => Ok(()),
            }
        }
    }
}
