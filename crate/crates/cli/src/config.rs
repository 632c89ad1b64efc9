//! Run configuration: JSON schema, validation against the admissibility
//! boxes and growth conditions, and construction of the solver inputs.

use std::path::PathBuf;

use monoflow_core::flow::{IntegrationMethod, IntegratorConfig};
use monoflow_core::linalg::Matrix;
use monoflow_core::operator::{zero_of_affine, Operator};
use monoflow_core::schedule::{check_growth_continuous, check_growth_discrete, GridSpec};
use monoflow_core::stepper::{DiscreteConfig, ResolventConfig, ResolventMethod};
use monoflow_core::{presets, BetaSchedule, SolverParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Continuous,
    Discrete,
}

/// Schedule descriptor as it appears in the config. The exponential
/// family takes `r`, `theta`, `delta` from the run parameters and
/// resolves against the mode (continuous or discrete growth form).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaConfig {
    Constant {
        #[serde(default = "one")]
        c: f64,
    },
    Power {
        p: f64,
        #[serde(default = "one")]
        c: f64,
    },
    Exponential {},
    Tabulated { taus: Vec<f64>, values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomAffine {
    pub m: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    #[default]
    Rk45,
    Rk4,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default)]
    pub method: IntegratorKind,
    /// Fixed step for rk4.
    #[serde(default)]
    pub step: Option<f64>,
    /// Relative tolerance for rk45.
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    /// Attempted-step ceiling for rk45 (stiffness guard).
    #[serde(default)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventSection {
    #[serde(default)]
    pub method: Option<String>, // "auto" | "direct_affine" | "newton"
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Size of the saddle preset (default 10).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Custom affine operator, alternative to a preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<CustomAffine>,
    pub mode: Mode,
    pub r: f64,
    pub alpha: f64,
    pub theta: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_k0")]
    pub k0: usize,
    pub beta: BetaConfig,
    /// Continuous horizon.
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Discrete iteration budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmax: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Skip the admissibility and growth-condition gates.
    #[serde(default)]
    pub force: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolvent: Option<ResolventSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zdot0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z1: Option<Vec<f64>>,
}

fn default_t0() -> f64 {
    1.0
}

fn default_k0() -> usize {
    1
}

fn default_seed() -> u64 {
    0
}

impl RunConfig {
    pub fn params(&self) -> SolverParams {
        SolverParams {
            r: self.r,
            alpha: self.alpha,
            theta: self.theta,
            delta: self.delta,
            t0: self.t0,
            k0: self.k0,
        }
    }

    pub fn schedule(&self) -> Result<BetaSchedule, CliError> {
        let s = match (&self.beta, self.mode) {
            (BetaConfig::Constant { c }, _) => BetaSchedule::constant(*c),
            (BetaConfig::Power { p, c }, _) => BetaSchedule::power(*p, *c),
            (BetaConfig::Exponential {}, Mode::Continuous) => {
                BetaSchedule::exponential_continuous(self.r, self.theta, self.delta)
            }
            (BetaConfig::Exponential {}, Mode::Discrete) => {
                BetaSchedule::exponential_discrete(self.r, self.theta, self.delta)
            }
            (BetaConfig::Tabulated { taus, values }, _) => {
                BetaSchedule::tabulated(taus.clone(), values.clone())
            }
        };
        s.map_err(|e| CliError::Validation(vec![e.to_string()]))
    }

    /// Builds the operator and, where available, the zero used by the
    /// gap/energy diagnostics.
    pub fn build_problem(&self) -> Result<Problem, CliError> {
        match (self.preset.as_deref(), &self.operator) {
            (Some("example1"), None) => {
                let problem = presets::example1();
                let z_star = problem.known_solution_stacked().expect("preset carries solution");
                Ok(Problem { operator: problem.operator(), z_star: Some(z_star), lagrangian: Some(problem) })
            }
            (Some("example2"), None) => {
                let n = self.n.unwrap_or(10);
                let operator = presets::example2(n)
                    .map_err(|e| CliError::Validation(vec![e.to_string()]))?;
                let z_star = zero_of_affine(&operator).ok();
                Ok(Problem { operator, z_star, lagrangian: None })
            }
            (Some(other), None) => Err(CliError::Validation(vec![format!(
                "unknown preset {other:?}; expected \"example1\" or \"example2\""
            )])),
            (None, Some(custom)) => {
                let m = Matrix::from_rows(&custom.m)
                    .map_err(|e| CliError::Validation(vec![e.to_string()]))?;
                let operator = Operator::affine(m, custom.q.clone())
                    .map_err(|e| CliError::Validation(vec![e.to_string()]))?;
                let z_star = zero_of_affine(&operator).ok();
                Ok(Problem { operator, z_star, lagrangian: None })
            }
            (Some(_), Some(_)) => Err(CliError::Validation(vec![
                "config must provide either a preset or a custom operator, not both".into(),
            ])),
            (None, None) => Err(CliError::Validation(vec![
                "config must provide a preset or a custom operator".into(),
            ])),
        }
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig, CliError> {
        let horizon = self.horizon.ok_or_else(|| {
            CliError::Validation(vec!["continuous mode requires a horizon T".into()])
        })?;
        let section = self.integrator.clone().unwrap_or(IntegratorSection {
            method: IntegratorKind::Rk45,
            step: None,
            rel_tol: None,
            abs_tol: None,
            samples: None,
            max_steps: None,
        });
        let method = match section.method {
            IntegratorKind::Rk4 => IntegrationMethod::Rk4Fixed {
                step: section.step.unwrap_or((horizon - self.t0) / 10_000.0),
            },
            IntegratorKind::Rk45 => IntegrationMethod::Rk45Adaptive {
                rel_tol: section.rel_tol.unwrap_or(1e-9),
                abs_tol: section.abs_tol.unwrap_or(1e-12),
            },
        };
        Ok(IntegratorConfig {
            method,
            horizon,
            sample_count: section.samples.unwrap_or(2000),
            max_steps: section.max_steps.unwrap_or(10_000_000),
            force: self.force,
        })
    }

    pub fn discrete_config(&self) -> Result<DiscreteConfig, CliError> {
        let kmax = self.kmax.ok_or_else(|| {
            CliError::Validation(vec!["discrete mode requires an iteration budget kmax".into()])
        })?;
        let section = self.resolvent.clone();
        let mut resolvent = ResolventConfig::default();
        if let Some(sec) = &section {
            if let Some(m) = &sec.method {
                resolvent.method = match m.as_str() {
                    "auto" => ResolventMethod::Auto,
                    "direct_affine" => ResolventMethod::DirectAffine,
                    "newton" => ResolventMethod::Newton,
                    other => {
                        return Err(CliError::Validation(vec![format!(
                            "unknown resolvent method {other:?}"
                        )]))
                    }
                };
            }
            if let Some(t) = sec.tol {
                resolvent.newton_tol = t;
            }
            if let Some(i) = sec.max_iter {
                resolvent.newton_max_iter = i;
            }
        }
        let mut cfg = DiscreteConfig::new(kmax).with_resolvent(resolvent);
        if let Some(stride) = section.and_then(|s| s.stride) {
            cfg = cfg.with_stride(stride);
        }
        if self.force {
            cfg = cfg.with_force();
        }
        Ok(cfg)
    }

    /// Every violated constraint, with the condition spelled out.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = self.params();
        match self.mode {
            Mode::Continuous => {
                out.extend(p.continuous_violations());
                if self.horizon.is_none() {
                    out.push("continuous mode requires a horizon T".into());
                }
                if let Some(t) = self.horizon {
                    // negated form rejects NaN horizons
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    if !(t > self.t0) {
                        out.push(format!("horizon T = {t} must exceed t0 = {}", self.t0));
                    }
                }
            }
            Mode::Discrete => {
                out.extend(p.discrete_violations());
                if self.kmax.is_none() {
                    out.push("discrete mode requires an iteration budget kmax".into());
                }
            }
        }
        if matches!(self.beta, BetaConfig::Exponential {}) {
            out.extend(match self.mode {
                Mode::Continuous => p.exponential_continuous_violations(),
                Mode::Discrete => p.exponential_discrete_violations(),
            });
        }
        // growth condition audit (needs a constructible schedule)
        if out.is_empty() {
            match self.schedule() {
                Err(CliError::Validation(msgs)) => out.extend(msgs),
                Err(_) => unreachable!("schedule construction only fails validation"),
                Ok(schedule) => match self.mode {
                    Mode::Continuous => {
                        match check_growth_continuous(&schedule, &p, &GridSpec::default()) {
                            Ok(rep) if !rep.passes => out.push(format!(
                                "growth condition sup t^r (beta'/beta + 2r/t) = {} is not < 1/theta = {}",
                                rep.sup, rep.bound
                            )),
                            Err(e) => out.push(e.to_string()),
                            _ => {}
                        }
                    }
                    Mode::Discrete => {
                        let k_audit = self.kmax.unwrap_or(1000).min(10_000).max(p.k0 + 1);
                        match check_growth_discrete(&schedule, &p, k_audit, 0.0) {
                            Ok(rep) if !rep.passes => out.push(format!(
                                "growth condition sup k^r ((beta_k - beta_(k-1))/beta_k + 2r/k) = {} is not < 1/(2 theta) = {}",
                                rep.sup, rep.bound
                            )),
                            Err(e) => out.push(e.to_string()),
                            _ => {}
                        }
                    }
                },
            }
        }
        out
    }
}

/// Operator plus diagnostic anchors resolved from a config.
pub struct Problem {
    pub operator: Operator,
    pub z_star: Option<Vec<f64>>,
    pub lagrangian: Option<monoflow_core::LagrangianProblem>,
}

/// Parses a config from a file path or inline JSON text, then validates
/// it (`force` downgrades admissibility violations to warnings).
pub fn load_config(path_or_json: &str) -> Result<RunConfig, CliError> {
    let text = if path_or_json.trim_start().starts_with('{') {
        path_or_json.to_string()
    } else {
        std::fs::read_to_string(path_or_json)
            .map_err(|e| CliError::Io(format!("cannot read {path_or_json}: {e}")))?
    };
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(vec![format!("config parse error: {e}")]))?;
    validate(cfg)
}

pub fn validate(cfg: RunConfig) -> Result<RunConfig, CliError> {
    cfg.build_problem()?;
    let violations = cfg.violations();
    if violations.is_empty() || cfg.force {
        Ok(cfg)
    } else {
        Err(CliError::Validation(violations))
    }
}
