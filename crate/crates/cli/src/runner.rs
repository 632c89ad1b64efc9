//! Executes validated configs: one solver run per config, CSV trajectory
//! plus JSON summary, and parallel parameter sweeps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use monoflow_core::diagnostics::{
    detect_transient, fit_exponential_rate, fit_loglog_slope, gap_function, primal_dual_metrics,
    FitWindow, RateReport,
};
use monoflow_core::flow::{energy_continuous, integrate, EnergyParams};
use monoflow_core::linalg;
use monoflow_core::operator::monotonicity_probe;
use monoflow_core::stepper::{energy_discrete, run_discrete};
use monoflow_core::Trajectory;
use serde::Serialize;

use crate::config::{BetaConfig, Mode, Problem, RunConfig};
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct TerminalState {
    pub tau: f64,
    pub norm_v: f64,
    pub gap: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ProbeSummary {
    pub min_inner_product: f64,
    pub trials: usize,
}

/// Everything the run learned, embedded alongside the exact config that
/// produced it.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub config: RunConfig,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub samples: usize,
    pub total_steps: usize,
    pub wall_time_s: f64,
    /// Empirical boundedness report: max |z| over all accepted steps.
    pub max_z_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalState>,
    pub rates: Vec<RateReport>,
    pub fit_warnings: Vec<String>,
    pub monotonicity_probe: ProbeSummary,
}

pub struct RunArtifacts {
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

impl RunArtifacts {
    pub fn numerical_error(&self) -> Option<&str> {
        self.summary.error.as_deref()
    }
}

/// Runs one validated config, writing `trajectory.csv` and
/// `summary.json` under the config's output directory. Solver failures
/// still flush the partial trajectory and an error record; the caller
/// maps them to exit code 3.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts, CliError> {
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("monoflow-out"));
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("mkdir {out_dir:?}: {e}")))?;

    let problem = cfg.build_problem()?;
    let schedule = cfg.schedule()?;
    let params = cfg.params();
    let probe = monotonicity_probe(&problem.operator, 100, cfg.seed)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let start = Instant::now();
    let (trajectory, solver_error): (Trajectory, Option<String>) = match cfg.mode {
        Mode::Continuous => {
            let icfg = cfg.integrator_config()?;
            let dim = problem.operator.dimension();
            let z0 = cfg.z0.clone().unwrap_or_else(|| vec![0.0; dim]);
            let zdot0 = cfg.zdot0.clone().unwrap_or_else(|| vec![0.0; dim]);
            match integrate(&problem.operator, &schedule, &params, &icfg, &z0, &zdot0) {
                Ok(t) => (t, None),
                Err(e) => match e.partial_trajectory() {
                    Some(partial) => (partial.clone(), Some(e.to_string())),
                    None => return Err(CliError::Numerical(e.to_string())),
                },
            }
        }
        Mode::Discrete => {
            let dcfg = cfg.discrete_config()?;
            let dim = problem.operator.dimension();
            let z0 = cfg.z0.clone().unwrap_or_else(|| vec![0.0; dim]);
            let z1 = cfg.z1.clone().unwrap_or_else(|| z0.clone());
            match run_discrete(&problem.operator, &schedule, &params, &z0, &z1, &dcfg) {
                Ok(t) => (t, None),
                Err(e) => match e.partial_trajectory() {
                    Some(partial) => (partial.clone(), Some(e.to_string())),
                    None => return Err(CliError::Numerical(e.to_string())),
                },
            }
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();

    let table = tabulate(cfg, &problem, &trajectory);
    let csv_path = out_dir.join("trajectory.csv");
    write_csv(&csv_path, &table)?;

    let (rates, fit_warnings) = fit_rates(cfg, &table);
    let transient_tau = table
        .column("norm_v")
        .and_then(|v| detect_transient(v, 50, v.first().map_or(0.0, |x| 1e-8 * x)))
        .map(|i| table.tau[i]);

    let terminal = trajectory.last().map(|s| TerminalState {
        tau: s.tau,
        norm_v: linalg::norm(&s.v),
        gap: problem.z_star.as_ref().map(|zs| gap_function(&s.z, zs, &s.v)),
    });

    let summary = Summary {
        config: cfg.clone(),
        status: if solver_error.is_none() { "ok".into() } else { "error".into() },
        error: solver_error,
        samples: trajectory.len(),
        total_steps: trajectory.total_steps,
        wall_time_s,
        max_z_norm: trajectory.max_z_norm,
        transient_tau,
        terminal,
        rates,
        fit_warnings,
        monotonicity_probe: ProbeSummary {
            min_inner_product: probe.min_inner_product,
            trials: probe.trials,
        },
    };

    let summary_path = out_dir.join("summary.json");
    let file = fs::File::create(&summary_path)
        .map_err(|e| CliError::Io(format!("create {summary_path:?}: {e}")))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &summary)
        .map_err(|e| CliError::Io(format!("write {summary_path:?}: {e}")))?;

    Ok(RunArtifacts { csv_path, summary_path, summary })
}

/// Column-oriented view of the per-sample diagnostics.
pub struct Table {
    pub header: Vec<&'static str>,
    pub tau: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Vec<f64>> {
        self.header.iter().position(|h| *h == name).map(|i| &self.columns[i])
    }
}

fn tabulate(_cfg: &RunConfig, problem: &Problem, traj: &Trajectory) -> Table {
    let mut header: Vec<&'static str> = vec!["norm_v"];
    if problem.z_star.is_some() {
        header.push("gap");
        header.push("energy");
    }
    if problem.lagrangian.is_some() {
        header.extend(["f_gap", "feasibility", "lagrangian_gap", "grad_gap", "adjoint_gap"]);
    }

    let energy_weights = EnergyParams::default_pair(&traj.params).0;
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(traj.len()); header.len()];
    let mut tau = Vec::with_capacity(traj.len());
    for s in &traj.samples {
        tau.push(s.tau);
        let mut row: Vec<f64> = vec![linalg::norm(&s.v)];
        if let Some(z_star) = &problem.z_star {
            row.push(gap_function(&s.z, z_star, &s.v));
            let energy = match traj.kind {
                monoflow_core::TrajectoryKind::Continuous => {
                    energy_continuous(s, &traj.schedule, &traj.params, &energy_weights, z_star)
                }
                monoflow_core::TrajectoryKind::Discrete => {
                    let z_prev = s
                        .velocity
                        .as_ref()
                        .map(|v| linalg::sub(&s.z, v))
                        .unwrap_or_else(|| s.z.clone());
                    energy_discrete(
                        s.tau as usize,
                        &s.z,
                        &z_prev,
                        &problem.operator,
                        &traj.schedule,
                        &traj.params,
                        &energy_weights,
                        z_star,
                    )
                }
            }
            .unwrap_or(f64::NAN);
            row.push(energy);
        }
        if let Some(lagrangian) = &problem.lagrangian {
            let n = lagrangian.primal_dim();
            let m = primal_dual_metrics(&s.z[..n], &s.z[n..], lagrangian).expect("known solution");
            row.extend([m.f_gap, m.feasibility, m.lagrangian_gap, m.grad_gap, m.adjoint_gap]);
        }
        for (column, value) in columns.iter_mut().zip(row) {
            column.push(value);
        }
    }
    // every emitted number must be finite: drop diagnostic columns that
    // overflowed (the trajectory samples themselves are always finite)
    let keep: Vec<bool> = columns.iter().map(|c| c.iter().all(|v| v.is_finite())).collect();
    let header: Vec<&'static str> =
        header.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(h, _)| h).collect();
    let columns: Vec<Vec<f64>> =
        columns.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(c, _)| c).collect();
    Table { header, tau, columns }
}

fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::Io(format!("create {path:?}: {e}")))?;
    let mut w = BufWriter::new(file);
    let mut line = String::from("tau");
    for h in &table.header {
        line.push(',');
        line.push_str(h);
    }
    writeln!(w, "{line}").map_err(|e| CliError::Io(e.to_string()))?;
    for i in 0..table.tau.len() {
        let mut line = format!("{:.16e}", table.tau[i]);
        for c in &table.columns {
            line.push_str(&format!(",{:.16e}", c[i]));
        }
        writeln!(w, "{line}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn fit_rates(cfg: &RunConfig, table: &Table) -> (Vec<RateReport>, Vec<String>) {
    let mut rates = Vec::new();
    let mut warnings = Vec::new();
    let mut fit = |name: &'static str, values: &[f64]| {
        let floored: Vec<f64> = values.iter().map(|v| v.abs().max(1e-300)).collect();
        match fit_loglog_slope(&table.tau, &floored, FitWindow::LastDecade, name) {
            Ok(r) => rates.push(r),
            Err(e) => warnings.push(e.to_string()),
        }
        if matches!(cfg.beta, BetaConfig::Exponential {}) && cfg.r < 1.0 {
            match fit_exponential_rate(
                &table.tau,
                &floored,
                cfg.r,
                FitWindow::LastDecade,
                &format!("{name}_exponential"),
            ) {
                Ok(r) => rates.push(r),
                Err(e) => warnings.push(e.to_string()),
            }
        }
    };
    for name in ["norm_v", "gap", "f_gap", "feasibility"] {
        if let Some(values) = table.column(name) {
            fit(name, values);
        }
    }
    (rates, warnings)
}

/// One row of a sweep's combined summary.
#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub messages: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_norm_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_v_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

/// Applies `axis=value` to a base config.
fn apply_axis(cfg: &RunConfig, axis: &str, value: &str) -> Result<RunConfig, String> {
    let mut out = cfg.clone();
    match axis {
        "r" | "theta" | "alpha" | "delta" => {
            let v: f64 = value.parse().map_err(|e| format!("bad {axis} value {value:?}: {e}"))?;
            match axis {
                "r" => out.r = v,
                "theta" => out.theta = v,
                "alpha" => out.alpha = v,
                _ => out.delta = v,
            }
        }
        "beta-family" => {
            out.beta = match value {
                "constant" => BetaConfig::Constant { c: 1.0 },
                "power" => BetaConfig::Power { p: 1.0, c: 1.0 },
                "exponential" => BetaConfig::Exponential {},
                other => return Err(format!("unknown beta family {other:?}")),
            };
        }
        other => return Err(format!("unsupported sweep axis {other:?} (expected r, theta, alpha, delta, beta-family)")),
    }
    Ok(out)
}

fn thread_budget(jobs: usize) -> usize {
    let cap = std::env::var("MONOFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

/// Runs the base config once per axis value; member runs execute in
/// parallel (capped by `MONOFLOW_THREADS`) and write into
/// `<out>/<axis>=<value>/`. Per-run failures are recorded, not fatal.
pub fn sweep(base: &RunConfig, axis: &str, values: &[String]) -> Result<SweepSummary, CliError> {
    let out_root = base.out.clone().unwrap_or_else(|| PathBuf::from("monoflow-out"));
    fs::create_dir_all(&out_root).map_err(|e| CliError::Io(format!("mkdir {out_root:?}: {e}")))?;

    // prepare member configs; invalid ones become rejected rows
    enum Job {
        Ready(usize, Box<RunConfig>),
        Rejected(usize, Vec<String>),
    }
    let mut jobs = Vec::new();
    for (i, value) in values.iter().enumerate() {
        match apply_axis(base, axis, value) {
            Err(msg) => jobs.push(Job::Rejected(i, vec![msg])),
            Ok(mut cfg) => {
                cfg.out = Some(out_root.join(format!("{axis}={value}")));
                let violations = cfg.violations();
                if violations.is_empty() || cfg.force {
                    jobs.push(Job::Ready(i, Box::new(cfg)));
                } else {
                    jobs.push(Job::Rejected(i, violations));
                }
            }
        }
    }

    let ready: Vec<(usize, RunConfig)> = jobs
        .iter()
        .filter_map(|j| match j {
            Job::Ready(i, cfg) => Some((*i, (**cfg).clone())),
            Job::Rejected(..) => None,
        })
        .collect();

    let results: Vec<(usize, Result<RunArtifacts, CliError>)> = {
        let cursor = AtomicUsize::new(0);
        let threads = thread_budget(ready.len());
        let mut collected: Vec<(usize, Result<RunArtifacts, CliError>)> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|_| {
                    let cursor = &cursor;
                    let ready = &ready;
                    scope.spawn(move || {
                        let mut local = Vec::new();
                        loop {
                            let i = cursor.fetch_add(1, Ordering::Relaxed);
                            if i >= ready.len() {
                                break;
                            }
                            let (idx, cfg) = &ready[i];
                            local.push((*idx, run(cfg)));
                        }
                        local
                    })
                })
                .collect();
            for h in handles {
                collected.extend(h.join().expect("sweep worker panicked"));
            }
        });
        collected
    };

    let mut rows: Vec<SweepRow> = Vec::with_capacity(values.len());
    for (i, value) in values.iter().enumerate() {
        let row = match jobs.iter().find(|j| matches!(j, Job::Ready(idx, _) | Job::Rejected(idx, _) if *idx == i)) {
            Some(Job::Rejected(_, msgs)) => SweepRow {
                value: value.clone(),
                status: "rejected".into(),
                messages: Some(msgs.clone()),
                terminal_norm_v: None,
                norm_v_slope: None,
                wall_time_s: None,
            },
            Some(Job::Ready(..)) => {
                let outcome = results.iter().find(|(idx, _)| *idx == i).map(|(_, r)| r);
                match outcome {
                    Some(Ok(artifacts)) => SweepRow {
                        value: value.clone(),
                        status: artifacts.summary.status.clone(),
                        messages: artifacts.summary.error.clone().map(|e| vec![e]),
                        terminal_norm_v: artifacts.summary.terminal.as_ref().map(|t| t.norm_v),
                        norm_v_slope: artifacts
                            .summary
                            .rates
                            .iter()
                            .find(|r| r.metric == "norm_v")
                            .map(|r| r.slope),
                        wall_time_s: Some(artifacts.summary.wall_time_s),
                    },
                    Some(Err(e)) => SweepRow {
                        value: value.clone(),
                        status: "error".into(),
                        messages: Some(vec![e.to_string()]),
                        terminal_norm_v: None,
                        norm_v_slope: None,
                        wall_time_s: None,
                    },
                    None => unreachable!("ready job without result"),
                }
            }
            None => unreachable!("job index missing"),
        };
        rows.push(row);
    }

    let summary = SweepSummary { axis: axis.to_string(), rows };
    let path = out_root.join("sweep_summary.json");
    let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("create {path:?}: {e}")))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &summary)
        .map_err(|e| CliError::Io(format!("write {path:?}: {e}")))?;
    Ok(summary)
}
