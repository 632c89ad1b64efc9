//! Implicit discrete solver. Each iteration rearranges the four-term
//! recurrence
//!
//! ```text
//! z^{k+1} = z^k + m_k (z^k - z^{k-1}) - a_k [V(z^{k+1}) - V(z^k)] - b_k V(z^{k+1})
//! ```
//!
//! into a resolvent problem `z^{k+1} + gamma_k V(z^{k+1}) = w_k` with
//! `gamma_k = a_k + b_k` and
//! `w_k = z^k + m_k (z^k - z^{k-1}) + a_k V(z^k)`, solved directly for
//! affine operators and by Newton iteration otherwise.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // f64 math methods in no_std builds
use num_traits::Float;

use crate::flow::EnergyParams;
use crate::linalg::{self, Matrix};
use crate::operator::Operator;
use crate::params::SolverParams;
use crate::schedule::{check_growth_discrete, BetaSchedule};
use crate::trajectory::{Sample, Trajectory, TrajectoryKind};
use crate::Error;

/// Residual budget enforced on every accepted step, relative to `1 + |w|`.
pub const RESIDUAL_BUDGET: f64 = 1e-10;

/// Weights of one implicit step.
#[derive(Debug, Clone, Copy)]
pub struct StepCoefficients {
    pub k: usize,
    /// `D = alpha - r k^{r-1} + (k+1)^r`.
    pub denominator: f64,
    /// Momentum weight `k^r / D`.
    pub momentum: f64,
    /// Operator-difference weight `theta k^{2r} beta_{k-1} / D`.
    pub operator_diff: f64,
    /// Operator weight
    /// `(theta {[(k+1)^{2r} - k^{2r}] - 2r k^{2r-1}} + k^r) beta_k / D`.
    pub operator: f64,
    /// Resolvent parameter `operator_diff + operator`.
    pub gamma: f64,
}

/// `beta_{k-1}` with the convention `beta_0 := beta_1`.
fn beta_prev(schedule: &BetaSchedule, k: usize) -> Result<f64, Error> {
    schedule.seq(if k <= 1 { 1 } else { k - 1 })
}

pub fn compute_coefficients(
    k: usize,
    p: &SolverParams,
    schedule: &BetaSchedule,
) -> Result<StepCoefficients, Error> {
    if k < 1 {
        return Err(Error::InvalidInput("step index k must be >= 1".into()));
    }
    let (r, alpha, theta) = (p.r, p.alpha, p.theta);
    let kf = k as f64;
    let kp = kf + 1.0;
    let beta_k = schedule.seq(k)?;
    let beta_km1 = beta_prev(schedule, k)?;

    let d = alpha - r * kf.powf(r - 1.0) + kp.powf(r);
    let momentum = kf.powf(r) / d;
    let operator_diff = theta * kf.powf(2.0 * r) * beta_km1 / d;
    let bracket = (kp.powf(2.0 * r) - kf.powf(2.0 * r)) - 2.0 * r * kf.powf(2.0 * r - 1.0);
    let operator = (theta * bracket + kf.powf(r)) * beta_k / d;
    let gamma = operator_diff + operator;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::IllPosedStep { k, gamma });
    }
    Ok(StepCoefficients { k, denominator: d, momentum, operator_diff, operator, gamma })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ResolventMethod {
    /// Direct factorization for affine operators, Newton otherwise.
    #[default]
    Auto,
    DirectAffine,
    Newton,
}

#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResolventConfig {
    pub method: ResolventMethod,
    /// Newton stop: `|z + gamma V(z) - w| <= newton_tol * (1 + |w|)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        ResolventConfig { method: ResolventMethod::Auto, newton_tol: 1e-12, newton_max_iter: 50 }
    }
}

/// Solves `z + gamma V(z) = w`; returns the solution and its residual
/// `|z + gamma V(z) - w|`.
pub fn resolvent(
    op: &Operator,
    gamma: f64,
    w: &[f64],
    cfg: &ResolventConfig,
) -> Result<(Vec<f64>, f64), Error> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(alloc::format!(
            "resolvent parameter gamma must be positive, got {gamma}"
        )));
    }
    if w.len() != op.dimension() {
        return Err(Error::DimensionMismatch { expected: op.dimension(), got: w.len() });
    }
    let direct = match cfg.method {
        ResolventMethod::DirectAffine => true,
        ResolventMethod::Newton => false,
        ResolventMethod::Auto => op.is_affine(),
    };
    if direct {
        let (m, q) = op.affine_parts().ok_or_else(|| {
            Error::InvalidInput("direct resolvent path requires an affine operator".into())
        })?;
        let n = op.dimension();
        // For gamma <= 1 solve (I + gamma M) z = w - gamma q; for large
        // gamma solve the equivalent (I/gamma + M) z = w/gamma - q so the
        // system entries stay at the scale of M.
        let (system, rhs): (Matrix, Vec<f64>) = if gamma <= 1.0 {
            (
                Matrix::from_fn(n, n, |i, j| gamma * m[(i, j)] + if i == j { 1.0 } else { 0.0 }),
                (0..n).map(|i| w[i] - gamma * q[i]).collect(),
            )
        } else {
            (
                Matrix::from_fn(n, n, |i, j| m[(i, j)] + if i == j { 1.0 / gamma } else { 0.0 }),
                (0..n).map(|i| w[i] / gamma - q[i]).collect(),
            )
        };
        let z = linalg::solve_dense(&system, &rhs)?;
        let res = resolvent_residual(op, gamma, &z, w)?;
        Ok((z, res))
    } else {
        newton_resolvent(op, gamma, w, cfg)
    }
}

fn resolvent_residual(op: &Operator, gamma: f64, z: &[f64], w: &[f64]) -> Result<f64, Error> {
    let v = op.evaluate(z)?;
    let mut acc = 0.0;
    for i in 0..z.len() {
        let r = z[i] + gamma * v[i] - w[i];
        acc += r * r;
    }
    Ok(acc.sqrt())
}

fn newton_resolvent(
    op: &Operator,
    gamma: f64,
    w: &[f64],
    cfg: &ResolventConfig,
) -> Result<(Vec<f64>, f64), Error> {
    let n = op.dimension();
    // the residual of z + gamma V(z) - w cannot be driven below the
    // rounding floor of evaluating gamma V(z)
    let tol = cfg.newton_tol * (1.0 + linalg::norm(w)) + 4.0 * f64::EPSILON * gamma;
    // for small gamma the resolvent is a perturbation of the identity,
    // so w itself is an O(gamma) starting guess
    let mut z = w.to_vec();
    for _ in 0..cfg.newton_max_iter {
        let v = op.evaluate(&z)?;
        let f: Vec<f64> = (0..n).map(|i| z[i] + gamma * v[i] - w[i]).collect();
        let residual = linalg::norm(&f);
        if residual <= tol {
            return Ok((z, residual));
        }
        let jac_v = op.jacobian(&z)?;
        let system = Matrix::from_fn(n, n, |i, j| {
            gamma * jac_v[(i, j)] + if i == j { 1.0 } else { 0.0 }
        });
        let step = linalg::solve_dense(&system, &f)?;
        for i in 0..n {
            z[i] -= step[i];
        }
        if !linalg::all_finite(&z) {
            return Err(Error::NonFinite { context: "Newton iterate" });
        }
    }
    // tolerance may still be met by the final correction
    let res = resolvent_residual(op, gamma, &z, w)?;
    if res <= tol {
        Ok((z, res))
    } else {
        Err(Error::NewtonNoConvergence { iterations: cfg.newton_max_iter, residual: res })
    }
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscreteConfig {
    pub resolvent: ResolventConfig,
    pub k_max: usize,
    /// Emit every `stride`-th iterate (`None`: `ceil(k_max / 2000)`).
    pub emit_stride: Option<usize>,
    /// Skip the parameter/growth validators.
    pub force: bool,
}

impl DiscreteConfig {
    pub fn new(k_max: usize) -> Self {
        DiscreteConfig { resolvent: ResolventConfig::default(), k_max, emit_stride: None, force: false }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.emit_stride = Some(stride.max(1));
        self
    }

    pub fn with_force(mut self) -> Self {
        self.force = true;
        self
    }

    pub fn with_resolvent(mut self, r: ResolventConfig) -> Self {
        self.resolvent = r;
        self
    }
}

/// Runs the implicit algorithm from initial points `z0, z1` up to
/// `z^{k_max + 1}`, emitting strided samples `(k, z^k, V(z^k))` whose
/// velocity slot carries the step `z^k - z^{k-1}`.
pub fn run_discrete(
    op: &Operator,
    schedule: &BetaSchedule,
    p: &SolverParams,
    z0: &[f64],
    z1: &[f64],
    cfg: &DiscreteConfig,
) -> Result<Trajectory, Error> {
    if z0.len() != op.dimension() || z1.len() != op.dimension() {
        return Err(Error::DimensionMismatch {
            expected: op.dimension(),
            got: if z0.len() != op.dimension() { z0.len() } else { z1.len() },
        });
    }
    if cfg.k_max < 1 {
        return Err(Error::InvalidInput("k_max must be >= 1".into()));
    }
    if !cfg.force {
        p.validate_discrete()?;
        let audit_k = cfg.k_max.min(10_000).max(p.k0 + 1);
        let growth = check_growth_discrete(schedule, p, audit_k, 0.0)?;
        if !growth.passes {
            return Err(Error::GrowthConditionFailed { sup: growth.sup, bound: growth.bound });
        }
    }

    let stride = cfg.emit_stride.unwrap_or_else(|| cfg.k_max.div_ceil(2000)).max(1);
    let mut traj = Trajectory::new(TrajectoryKind::Discrete, p.clone(), schedule.clone());
    traj.max_z_norm = linalg::norm(z0).max(linalg::norm(z1));

    let mut z_prev = z0.to_vec();
    let mut z_curr = z1.to_vec();

    let fail = |k: usize, source: Error, traj: &Trajectory| Error::DiscreteStep {
        k,
        source: Box::new(source),
        partial: Box::new(traj.clone()),
    };

    for k in 1..=cfg.k_max {
        let v_curr = match op.evaluate(&z_curr) {
            Ok(v) => v,
            Err(e) => return Err(fail(k, e, &traj)),
        };
        if k == 1 || k.is_multiple_of(stride) {
            let step: Vec<f64> = linalg::sub(&z_curr, &z_prev);
            traj.push(Sample {
                tau: k as f64,
                z: z_curr.clone(),
                v: v_curr.clone(),
                velocity: Some(step),
                aux: None,
            })?;
        }

        let coeff = match compute_coefficients(k, p, schedule) {
            Ok(c) => c,
            Err(e) => return Err(fail(k, e, &traj)),
        };
        let mut w = vec![0.0; z_curr.len()];
        for i in 0..w.len() {
            w[i] = z_curr[i] + coeff.momentum * (z_curr[i] - z_prev[i]) + coeff.operator_diff * v_curr[i];
        }
        let (z_next, residual) = match resolvent(op, coeff.gamma, &w, &cfg.resolvent) {
            Ok(out) => out,
            Err(e) => return Err(fail(k, e, &traj)),
        };
        // the spec budget plus the rounding floor of gamma V(z) for
        // schedules where gamma grows without bound
        let budget = RESIDUAL_BUDGET * (1.0 + linalg::norm(&w))
            + 1e-14 * coeff.gamma * (1.0 + linalg::norm(&z_next) + linalg::norm(&w));
        if residual > budget {
            return Err(fail(
                k,
                Error::NewtonNoConvergence { iterations: cfg.resolvent.newton_max_iter, residual },
                &traj,
            ));
        }
        traj.total_steps += 1;
        traj.max_z_norm = traj.max_z_norm.max(linalg::norm(&z_next));
        z_prev = z_curr;
        z_curr = z_next;
    }

    let v_final = match op.evaluate(&z_curr) {
        Ok(v) => v,
        Err(e) => return Err(fail(cfg.k_max + 1, e, &traj)),
    };
    let step = linalg::sub(&z_curr, &z_prev);
    traj.push(Sample {
        tau: (cfg.k_max + 1) as f64,
        z: z_curr,
        v: v_final,
        velocity: Some(step),
        aux: None,
    })?;
    Ok(traj)
}

/// Discrete Lyapunov energy at iterate `k`:
///
/// ```text
/// E^k = 1/2 |2 lambda k^{rho-r} (z^k - z*) + 2 k^rho (z^k - z^{k-1})
///            + theta k^{rho+r} beta_{k-1} V(z^k)|^2
///     + 2 lambda k^{2(rho-r)} (alpha - (2 rho - r) k^{r-1} - lambda) |z^k - z*|^2
///     + 2 lambda theta k^{2 rho} beta_{k-1} <z^k - z*, V(z^k)>
///     + theta^2/2 (k+1)^{2r} k^{2 rho} beta_k beta_{k-1} |V(z^k)|^2
/// ```
#[allow(clippy::too_many_arguments)]
pub fn energy_discrete(
    k: usize,
    z_k: &[f64],
    z_prev: &[f64],
    op: &Operator,
    schedule: &BetaSchedule,
    p: &SolverParams,
    e: &EnergyParams,
    z_star: &[f64],
) -> Result<f64, Error> {
    e.validate(p)?;
    if k < 1 {
        return Err(Error::InvalidInput("energy index k must be >= 1".into()));
    }
    if z_prev.len() != z_k.len() || z_star.len() != z_k.len() {
        return Err(Error::DimensionMismatch { expected: z_k.len(), got: z_prev.len().min(z_star.len()) });
    }
    let v = op.evaluate(z_k)?;
    let (r, rho, lambda, theta, alpha) = (p.r, e.rho, e.lambda, p.theta, p.alpha);
    let kf = k as f64;
    let beta_k = schedule.seq(k)?;
    let beta_km1 = beta_prev(schedule, k)?;

    let w_disp = 2.0 * lambda * kf.powf(rho - r);
    let w_step = 2.0 * kf.powf(rho);
    let w_op = theta * kf.powf(rho + r) * beta_km1;

    let mut sq = 0.0;
    let mut dist2 = 0.0;
    let mut gap = 0.0;
    let mut v2 = 0.0;
    for i in 0..z_k.len() {
        let d = z_k[i] - z_star[i];
        let st = z_k[i] - z_prev[i];
        let w = w_disp * d + w_step * st + w_op * v[i];
        sq += w * w;
        dist2 += d * d;
        gap += d * v[i];
        v2 += v[i] * v[i];
    }

    Ok(0.5 * sq
        + 2.0 * lambda
            * kf.powf(2.0 * (rho - r))
            * (alpha - (2.0 * rho - r) * kf.powf(r - 1.0) - lambda)
            * dist2
        + 2.0 * lambda * theta * kf.powf(2.0 * rho) * beta_km1 * gap
        + 0.5 * theta * theta * (kf + 1.0).powf(2.0 * r) * kf.powf(2.0 * rho) * beta_k * beta_km1 * v2)
}

/// The scalar weight multiplying `V(z^{k+1})` once all operator terms of
/// the recurrence are collected on one side:
///
/// ```text
/// eta_k = 2 k^r [ (2 r theta k^{r-1} - 1) beta_k + theta k^r (beta_k - beta_{k-1}) ]
///         - theta [ (k+1)^{2r} beta_k - k^{2r} beta_{k-1} ]
/// ```
///
/// Diagnostic only; negativity for large `k` is what makes the energy
/// estimates close.
pub fn eta_k(k: usize, p: &SolverParams, schedule: &BetaSchedule) -> Result<f64, Error> {
    if k < 1 {
        return Err(Error::InvalidInput("eta index k must be >= 1".into()));
    }
    let (r, theta) = (p.r, p.theta);
    let kf = k as f64;
    let kp = kf + 1.0;
    let beta_k = schedule.seq(k)?;
    let beta_km1 = beta_prev(schedule, k)?;
    Ok(2.0 * kf.powf(r)
        * ((2.0 * r * theta * kf.powf(r - 1.0) - 1.0) * beta_k + theta * kf.powf(r) * (beta_k - beta_km1))
        - theta * (kp.powf(2.0 * r) * beta_k - kf.powf(2.0 * r) * beta_km1))
}
