//! Continuous solver: integrates the second-order damped system through
//! its first-order `(u, z)` reformulation
//!
//! ```text
//! u'(t) = 2 t^r [ (2 r theta t^{r-1} - 1) beta(t) + theta t^r beta'(t) ] V(z(t))
//!         + 2 r (1 - r) t^{r-2} z(t)
//! u(t)  = 2 (alpha - r t^{r-1}) z(t) + 2 t^r z'(t) + 2 theta t^{2r} beta(t) V(z(t))
//! ```
//!
//! so a single operator evaluation drives both components per
//! right-hand-side call, and `z'` is reconstructed from `(u, z, V(z))`
//! at every emitted sample.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // f64 math methods in no_std builds
use num_traits::Float;

use crate::linalg;
use crate::operator::Operator;
use crate::params::SolverParams;
use crate::schedule::{check_growth_continuous, BetaSchedule, GridSpec};
use crate::trajectory::{Sample, Trajectory, TrajectoryKind};
use crate::Error;

/// State of the first-order reformulation at time `t`.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

impl FlowState {
    /// Consistent initial state at `t0` from position and velocity.
    pub fn initial(
        op: &Operator,
        schedule: &BetaSchedule,
        p: &SolverParams,
        z0: &[f64],
        zdot0: &[f64],
    ) -> Result<Self, Error> {
        if z0.len() != op.dimension() {
            return Err(Error::DimensionMismatch { expected: op.dimension(), got: z0.len() });
        }
        if zdot0.len() != op.dimension() {
            return Err(Error::DimensionMismatch { expected: op.dimension(), got: zdot0.len() });
        }
        if !linalg::all_finite(z0) || !linalg::all_finite(zdot0) {
            return Err(Error::NonFinite { context: "initial data" });
        }
        let t0 = p.t0;
        let v0 = op.evaluate(z0)?;
        let beta0 = schedule.value(t0)?;
        let damp = 2.0 * (p.alpha - p.r * t0.powf(p.r - 1.0));
        let vel = 2.0 * t0.powf(p.r);
        let opw = 2.0 * p.theta * t0.powf(2.0 * p.r) * beta0;
        let u = (0..z0.len())
            .map(|i| damp * z0[i] + vel * zdot0[i] + opw * v0[i])
            .collect();
        Ok(FlowState { t: t0, z: z0.to_vec(), u })
    }
}

/// Right-hand side of the reformulated system; one operator evaluation
/// per call. Returns `(du, dz)`.
pub fn flow_rhs(
    state: &FlowState,
    op: &Operator,
    schedule: &BetaSchedule,
    p: &SolverParams,
) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let v = op.evaluate(&state.z)?;
    let c = RhsCoefficients::at(state.t, schedule, p)?;
    let n = state.z.len();
    let mut du = vec![0.0; n];
    let mut dz = vec![0.0; n];
    for i in 0..n {
        du[i] = c.v_to_du * v[i] + c.z_to_du * state.z[i];
        dz[i] = (state.u[i] - c.z_damp * state.z[i] - c.v_weight * v[i]) / c.two_tr;
    }
    Ok((du, dz))
}

/// Time-dependent coefficients of the reformulated system.
struct RhsCoefficients {
    /// `2 t^r [(2 r theta t^{r-1} - 1) beta + theta t^r beta']`
    v_to_du: f64,
    /// `2 r (1 - r) t^{r-2}`
    z_to_du: f64,
    /// `2 (alpha - r t^{r-1})`
    z_damp: f64,
    /// `2 theta t^{2r} beta`
    v_weight: f64,
    /// `2 t^r`
    two_tr: f64,
}

impl RhsCoefficients {
    fn at(t: f64, schedule: &BetaSchedule, p: &SolverParams) -> Result<Self, Error> {
        let (r, alpha, theta) = (p.r, p.alpha, p.theta);
        let beta = schedule.value(t)?;
        let dbeta = schedule.derivative(t)?;
        let tr = t.powf(r);
        let tr1 = t.powf(r - 1.0);
        Ok(RhsCoefficients {
            v_to_du: 2.0 * tr * ((2.0 * r * theta * tr1 - 1.0) * beta + theta * tr * dbeta),
            z_to_du: 2.0 * r * (1.0 - r) * t.powf(r - 2.0),
            z_damp: 2.0 * (alpha - r * tr1),
            v_weight: 2.0 * theta * tr * tr * beta,
            two_tr: 2.0 * tr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "method"))]
pub enum IntegrationMethod {
    Rk4Fixed { step: f64 },
    Rk45Adaptive { rel_tol: f64, abs_tol: f64 },
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegratorConfig {
    pub method: IntegrationMethod,
    /// Final time `T`.
    pub horizon: f64,
    /// Emitted samples (geometric in `t` for the adaptive path, strided
    /// for the fixed path); clamped to at least 2.
    pub sample_count: usize,
    /// Attempted-step ceiling for the adaptive path; exceeding it aborts
    /// with a stiffness error carrying the partial trajectory.
    pub max_steps: usize,
    /// Skip the parameter/growth validators.
    pub force: bool,
}

impl IntegratorConfig {
    pub fn rk4(step: f64, horizon: f64) -> Self {
        IntegratorConfig {
            method: IntegrationMethod::Rk4Fixed { step },
            horizon,
            sample_count: 2000,
            max_steps: 10_000_000,
            force: false,
        }
    }

    pub fn adaptive(rel_tol: f64, horizon: f64) -> Self {
        IntegratorConfig {
            method: IntegrationMethod::Rk45Adaptive { rel_tol, abs_tol: 1e-12 },
            horizon,
            sample_count: 2000,
            max_steps: 10_000_000,
            force: false,
        }
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n.max(1);
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.sample_count = n;
        self
    }

    pub fn with_force(mut self) -> Self {
        self.force = true;
        self
    }

    fn validate(&self, p: &SolverParams) -> Result<(), Error> {
        if !(self.horizon > p.t0) {
            return Err(Error::InvalidInput(alloc::format!(
                "horizon {} must exceed t0 = {}",
                self.horizon,
                p.t0
            )));
        }
        match self.method {
            IntegrationMethod::Rk4Fixed { step } => {
                if !(step > 0.0 && step < self.horizon - p.t0) {
                    return Err(Error::InvalidInput(alloc::format!(
                        "fixed step {step} must lie in (0, T - t0)"
                    )));
                }
            }
            IntegrationMethod::Rk45Adaptive { rel_tol, abs_tol } => {
                if !(rel_tol > 0.0 && rel_tol <= 1e-2) || !(abs_tol > 0.0 && abs_tol <= 1e-2) {
                    return Err(Error::InvalidInput(
                        "adaptive tolerances must lie in (0, 1e-2]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Integrates the damped flow from `(z0, zdot0)` up to `cfg.horizon`.
///
/// Unless `cfg.force` is set, the solver first checks the parameter
/// admissibility box and the schedule growth condition.
pub fn integrate(
    op: &Operator,
    schedule: &BetaSchedule,
    p: &SolverParams,
    cfg: &IntegratorConfig,
    z0: &[f64],
    zdot0: &[f64],
) -> Result<Trajectory, Error> {
    cfg.validate(p)?;
    if !cfg.force {
        p.validate_continuous()?;
        let growth = check_growth_continuous(schedule, p, &GridSpec::default())?;
        if !growth.passes {
            return Err(Error::GrowthConditionFailed { sup: growth.sup, bound: growth.bound });
        }
    }

    let state0 = FlowState::initial(op, schedule, p, z0, zdot0)?;
    let mut y = state0.u.clone();
    y.extend_from_slice(&state0.z);

    let mut traj = Trajectory::new(TrajectoryKind::Continuous, p.clone(), schedule.clone());
    let samples = cfg.sample_count.max(2);

    match cfg.method {
        IntegrationMethod::Rk4Fixed { step } => {
            run_rk4(op, schedule, p, cfg.horizon, step, samples, y, &mut traj)?
        }
        IntegrationMethod::Rk45Adaptive { rel_tol, abs_tol } => run_rk45(
            op,
            schedule,
            p,
            cfg.horizon,
            rel_tol,
            abs_tol,
            samples,
            cfg.max_steps,
            y,
            &mut traj,
        )?,
    }
    Ok(traj)
}

fn rhs_packed(
    op: &Operator,
    schedule: &BetaSchedule,
    p: &SolverParams,
    t: f64,
    y: &[f64],
    dy: &mut [f64],
    v_buf: &mut [f64],
) -> Result<(), Error> {
    let n = v_buf.len();
    let (u, z) = y.split_at(n);
    op.eval_into(z, v_buf);
    let c = RhsCoefficients::at(t, schedule, p)?;
    let (du, dz) = dy.split_at_mut(n);
    for i in 0..n {
        du[i] = c.v_to_du * v_buf[i] + c.z_to_du * z[i];
        dz[i] = (u[i] - c.z_damp * z[i] - c.v_weight * v_buf[i]) / c.two_tr;
    }
    Ok(())
}

fn emit_sample(
    traj: &mut Trajectory,
    op: &Operator,
    schedule: &BetaSchedule,
    p: &SolverParams,
    t: f64,
    y: &[f64],
) -> Result<(), Error> {
    let n = op.dimension();
    let (u, z) = y.split_at(n);
    let v = op.evaluate(z)?;
    let c = RhsCoefficients::at(t, schedule, p)?;
    let velocity: Vec<f64> = (0..n)
        .map(|i| (u[i] - c.z_damp * z[i] - c.v_weight * v[i]) / c.two_tr)
        .collect();
    traj.push(Sample {
        tau: t,
        z: z.to_vec(),
        v,
        velocity: Some(velocity),
        aux: Some(u.to_vec()),
    })
}

fn track(traj: &mut Trajectory, y: &[f64], n: usize) {
    traj.max_z_norm = traj.max_z_norm.max(linalg::norm(&y[n..]));
    traj.total_steps += 1;
}

fn diverged(traj: Trajectory, t: f64) -> Error {
    Error::Divergence { at: t, partial: Box::new(traj) }
}

#[allow(clippy::too_many_arguments)]
fn run_rk4(
    op: &Operator,
    schedule: &BetaSchedule,
    p: &SolverParams,
    horizon: f64,
    step: f64,
    samples: usize,
    mut y: Vec<f64>,
    traj: &mut Trajectory,
) -> Result<(), Error> {
    let n = op.dimension();
    let dim = 2 * n;
    let mut t = p.t0;
    let total = ((horizon - p.t0) / step).ceil() as usize;
    let stride = (total / (samples - 1)).max(1);

    let mut v_buf = vec![0.0; n];
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    emit_sample(traj, op, schedule, p, t, &y)?;
    let mut taken = 0usize;
    while t < horizon - 1e-12 * horizon.max(1.0) {
        let h = step.min(horizon - t);
        rhs_packed(op, schedule, p, t, &y, &mut k1, &mut v_buf)?;
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs_packed(op, schedule, p, t + 0.5 * h, &tmp, &mut k2, &mut v_buf)?;
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs_packed(op, schedule, p, t + 0.5 * h, &tmp, &mut k3, &mut v_buf)?;
        for i in 0..dim {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs_packed(op, schedule, p, t + h, &tmp, &mut k4, &mut v_buf)?;
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
        taken += 1;
        if !linalg::all_finite(&y) {
            return Err(diverged(traj.clone(), t));
        }
        track(traj, &y, n);
        let last = t >= horizon - 1e-12 * horizon.max(1.0);
        if taken.is_multiple_of(stride) || last {
            emit_sample(traj, op, schedule, p, t, &y)?;
        }
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[allow(clippy::too_many_arguments)]
fn run_rk45(
    op: &Operator,
    schedule: &BetaSchedule,
    p: &SolverParams,
    horizon: f64,
    rel_tol: f64,
    abs_tol: f64,
    samples: usize,
    max_steps: usize,
    mut y: Vec<f64>,
    traj: &mut Trajectory,
) -> Result<(), Error> {
    let n = op.dimension();
    let dim = 2 * n;
    let t0 = p.t0;
    let mut t = t0;

    // geometric emission targets over [t0, T]
    let ratio = (horizon / t0).powf(1.0 / (samples - 1) as f64);
    let mut next_target_idx = 1usize;
    let target_at = |i: usize| -> f64 {
        if i >= samples - 1 { horizon } else { t0 * ratio.powi(i as i32) }
    };

    let mut v_buf = vec![0.0; n];
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut y_new = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    emit_sample(traj, op, schedule, p, t, &y)?;
    rhs_packed(op, schedule, p, t, &y, &mut k[0], &mut v_buf)?;

    let mut h_ctrl = ((horizon - t0) * 1e-4).min(0.1);
    let mut attempts = 0usize;
    loop {
        if t >= horizon - 1e-12 * horizon.max(1.0) {
            break;
        }
        attempts += 1;
        if attempts > max_steps {
            return Err(Error::StepBudgetExhausted {
                at: t,
                budget: max_steps,
                partial: Box::new(traj.clone()),
            });
        }
        let mut target = target_at(next_target_idx);
        while target <= t * (1.0 + 1e-14) && next_target_idx < samples - 1 {
            next_target_idx += 1;
            target = target_at(next_target_idx);
        }
        let event = target.min(horizon);
        let h = h_ctrl.min(event - t);
        let h_min = 1e-14 * t.abs().max(1.0);
        if h < h_min {
            return Err(Error::StepUnderflow { at: t, step: h, partial: Box::new(traj.clone()) });
        }
        let clipped = h < h_ctrl;

        // stages 2..7 (stage 7 is the FSAL evaluation at (t+h, y_new))
        let mut failed = false;
        for stage in 0..6 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    let a = DP_A[stage][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                tmp[i] = y[i] + h * acc;
            }
            if stage == 5 {
                y_new.copy_from_slice(&tmp);
            }
            let ts = t + DP_C[stage] * h;
            if rhs_packed(op, schedule, p, ts, &tmp, &mut k[stage + 1], &mut v_buf).is_err() {
                failed = true;
                break;
            }
        }

        // weighted rms of the embedded 5th/4th order difference
        let err = if failed {
            f64::INFINITY
        } else {
            let b5: [f64; 7] = [DP_A[5][0], DP_A[5][1], DP_A[5][2], DP_A[5][3], DP_A[5][4], DP_A[5][5], 0.0];
            let mut acc = 0.0;
            for i in 0..dim {
                let mut e = 0.0;
                for j in 0..7 {
                    e += (b5[j] - DP_B4[j]) * k[j][i];
                }
                e *= h;
                let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
                acc += (e / scale) * (e / scale);
            }
            (acc / dim as f64).sqrt()
        };

        if err.is_finite() && err <= 1.0 && linalg::all_finite(&y_new) {
            t += h;
            core::mem::swap(&mut y, &mut y_new);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]); // FSAL
            track(traj, &y, n);
            if t >= event - 1e-12 * event.max(1.0) && t < horizon - 1e-12 * horizon.max(1.0) {
                emit_sample(traj, op, schedule, p, t, &y)?;
                next_target_idx += 1;
            } else if t >= horizon - 1e-12 * horizon.max(1.0) {
                emit_sample(traj, op, schedule, p, t, &y)?;
            }
            let factor = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            h_ctrl = if clipped { h_ctrl.max(h * factor) } else { h * factor };
        } else if !err.is_finite() && !linalg::all_finite(&y) {
            return Err(diverged(traj.clone(), t));
        } else {
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.2
            };
            h_ctrl = h * factor;
        }
    }
    Ok(())
}

/// Weights of the Lyapunov energy.
///
/// Admissible ranges depend on the damping exponent: `rho = 0` and
/// `0 < lambda < alpha` for `r = 0`; `0 < rho < r` and
/// `0 < lambda < alpha` for `r` in `(0, 1)`; `rho = 1` and
/// `0 < lambda < alpha - 1` for `r = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyParams {
    pub lambda: f64,
    pub rho: f64,
}

impl EnergyParams {
    pub fn validate(&self, p: &SolverParams) -> Result<(), Error> {
        let ok = if p.r == 0.0 {
            self.rho == 0.0 && self.lambda > 0.0 && self.lambda < p.alpha
        } else if p.r < 1.0 {
            self.rho > 0.0 && self.rho < p.r && self.lambda > 0.0 && self.lambda < p.alpha
        } else {
            self.rho == 1.0 && self.lambda > 0.0 && self.lambda < p.alpha - 1.0
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(alloc::format!(
                "energy weights (lambda={}, rho={}) inadmissible for r={}",
                self.lambda,
                self.rho,
                p.r
            )))
        }
    }

    /// Two distinct admissible weights centered on the distinguished
    /// value `alpha/2 - 1/(2 theta)` (or `(alpha-1)/2 - 1/(2 theta)` at
    /// `r = 1`), clipped into the open admissible interval.
    pub fn default_pair(p: &SolverParams) -> (EnergyParams, EnergyParams) {
        let upper = if p.r == 1.0 { p.alpha - 1.0 } else { p.alpha };
        let nominal = if p.r == 1.0 {
            (p.alpha - 1.0) / 2.0 - 0.5 / p.theta
        } else {
            p.alpha / 2.0 - 0.5 / p.theta
        };
        let lambda1 = nominal.clamp(0.05 * upper, 0.9 * upper);
        let lambda2 = 0.5 * (lambda1 + upper).min(1.9 * upper);
        let rho = if p.r == 1.0 {
            1.0
        } else if p.r == 0.0 {
            0.0
        } else {
            0.9 * p.r
        };
        (EnergyParams { lambda: lambda1, rho }, EnergyParams { lambda: lambda2, rho })
    }
}

/// Lyapunov energy of one continuous sample relative to a zero `z_star`:
///
/// ```text
/// E = 1/2 |2 lambda t^{rho-r} (z - z*) + 2 t^rho z' + theta t^{rho+r} beta V|^2
///   + 2 lambda t^{2(rho-r)} (alpha - (2 rho - r) t^{r-1} - lambda) |z - z*|^2
///   + 2 lambda theta t^{2 rho} beta <z - z*, V>
///   + theta^2/2 t^{2(rho+r)} beta^2 |V|^2
/// ```
///
/// The sample must carry a velocity (the integrator always emits one).
pub fn energy_continuous(
    sample: &Sample,
    schedule: &BetaSchedule,
    p: &SolverParams,
    e: &EnergyParams,
    z_star: &[f64],
) -> Result<f64, Error> {
    e.validate(p)?;
    let zdot = sample
        .velocity
        .as_ref()
        .ok_or(Error::UnsupportedMetric("continuous energy needs a velocity sample"))?;
    if z_star.len() != sample.z.len() {
        return Err(Error::DimensionMismatch { expected: sample.z.len(), got: z_star.len() });
    }
    let t = sample.tau;
    let beta = schedule.value(t)?;
    let (r, rho, lambda, theta, alpha) = (p.r, e.rho, e.lambda, p.theta, p.alpha);

    let w_disp = 2.0 * lambda * t.powf(rho - r);
    let w_vel = 2.0 * t.powf(rho);
    let w_op = theta * t.powf(rho + r) * beta;

    let mut sq = 0.0;
    let mut dist2 = 0.0;
    let mut gap = 0.0;
    let mut v2 = 0.0;
    for i in 0..sample.z.len() {
        let d = sample.z[i] - z_star[i];
        let w = w_disp * d + w_vel * zdot[i] + w_op * sample.v[i];
        sq += w * w;
        dist2 += d * d;
        gap += d * sample.v[i];
        v2 += sample.v[i] * sample.v[i];
    }

    Ok(0.5 * sq
        + 2.0 * lambda
            * t.powf(2.0 * (rho - r))
            * (alpha - (2.0 * rho - r) * t.powf(r - 1.0) - lambda)
            * dist2
        + 2.0 * lambda * theta * t.powf(2.0 * rho) * beta * gap
        + 0.5 * theta * theta * t.powf(2.0 * (rho + r)) * beta * beta * v2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::presets;

    fn scalar_op() -> Operator {
        Operator::affine(Matrix::identity(1), vec![0.0]).unwrap()
    }

    #[test]
    fn rhs_hand_example() {
        // scalar V(z) = z, t = 1, r = 0, alpha = 2, theta = 1, beta = 1,
        // z = 1, u = 4: du = -2, dz = -1.
        let p = SolverParams { r: 0.0, alpha: 2.0, theta: 1.0, delta: 0.0, t0: 1.0, k0: 1 };
        let s = BetaSchedule::constant(1.0).unwrap();
        let state = FlowState { t: 1.0, z: vec![1.0], u: vec![4.0] };
        let (du, dz) = flow_rhs(&state, &scalar_op(), &s, &p).unwrap();
        assert!((du[0] + 2.0).abs() < 1e-15);
        assert!((dz[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rhs_vanishing_operator_term_at_zero() {
        // at z = z* the V contribution drops out of du
        let p = SolverParams { r: 0.5, alpha: 8.0, theta: 0.3, delta: 0.0, t0: 1.0, k0: 1 };
        let s = BetaSchedule::constant(1.0).unwrap();
        let op = Operator::affine(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let t = 2.0;
        let state = FlowState { t, z: vec![0.0, 0.0], u: vec![1.0, -1.0] };
        let (du, dz) = flow_rhs(&state, &op, &s, &p).unwrap();
        assert_eq!(du, vec![0.0, 0.0]); // 2r(1-r) t^{r-2} z* = 0 at z* = 0
        let tr = t.powf(0.5);
        assert!((dz[0] - 1.0 / (2.0 * tr)).abs() < 1e-15);
        assert!((dz[1] + 1.0 / (2.0 * tr)).abs() < 1e-15);
    }

    #[test]
    fn rhs_simplifies_at_r_one() {
        // r = 1, beta constant: du = 2 t (2 theta - 1) V(z), no z term.
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        for &t in &[1.0, 3.0, 10.0] {
            let state = FlowState { t, z: vec![0.7], u: vec![0.0] };
            let (du, _) = flow_rhs(&state, &scalar_op(), &s, &p).unwrap();
            let expected = 2.0 * t * (2.0 * 0.25 - 1.0) * 0.7;
            assert!((du[0] - expected).abs() < 1e-12 * expected.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn zero_operator_keeps_equilibrium() {
        let op = Operator::general(2, |_, out| out.fill(0.0)).unwrap();
        let p = SolverParams::new(0.5, 8.0, 0.3);
        let s = BetaSchedule::constant(1.0).unwrap();
        let cfg = IntegratorConfig::rk4(0.01, 20.0).with_samples(50);
        let z0 = [1.5, -2.0];
        let traj = integrate(&op, &s, &p, &cfg, &z0, &[0.0, 0.0]).unwrap();
        let last = traj.last().unwrap();
        assert!((last.tau - 20.0).abs() < 1e-9);
        for i in 0..2 {
            assert!((last.z[i] - z0[i]).abs() < 1e-8, "z drifted: {:?}", last.z);
        }
    }

    #[test]
    fn scalar_decay_matches_tiny_step_oracle() {
        // V(z) = z, r = 1, alpha = 8, theta = 0.25, beta = 1, z0 = 1:
        // reference by RK4 with step 1e-4.
        let op = scalar_op();
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        let t_end = 100.0;

        let oracle_cfg = IntegratorConfig::rk4(1e-4, t_end).with_samples(2);
        let oracle = integrate(&op, &s, &p, &oracle_cfg, &[1.0], &[0.0]).unwrap();
        let z_ref = oracle.last().unwrap().z[0];

        let cfg = IntegratorConfig::adaptive(1e-9, t_end).with_samples(100);
        let traj = integrate(&op, &s, &p, &cfg, &[1.0], &[0.0]).unwrap();
        let z_adaptive = traj.last().unwrap().z[0];

        assert!((z_adaptive - z_ref).abs() < 1e-7, "adaptive {z_adaptive} vs oracle {z_ref}");
        assert!(z_ref.abs() < 1e-3, "|z(T)| = {}", z_ref.abs());
    }

    #[test]
    fn velocity_is_consistent_with_finite_differences() {
        let op = presets::example1().operator();
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        let cfg = IntegratorConfig::rk4(0.005, 5.0).with_samples(800);
        let z0 = vec![0.0; 6];
        let traj = integrate(&op, &s, &p, &cfg, &z0, &z0).unwrap();
        // central differences over adjacent samples, skipping the fast
        // initial transient where the finite-difference error dominates
        let mut checked = 0;
        for w in traj.samples.windows(3).skip(20) {
            let dt = w[2].tau - w[0].tau;
            for i in 0..6 {
                let fd = (w[2].z[i] - w[0].z[i]) / dt;
                let vel = w[1].velocity.as_ref().unwrap()[i];
                assert!((fd - vel).abs() < 1e-3 * vel.abs().max(1.0), "fd {fd} vel {vel}");
            }
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn velocity_matches_reconstruction_from_aux() {
        let op = presets::example1().operator();
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        let cfg = IntegratorConfig::adaptive(1e-8, 50.0).with_samples(64);
        let z0 = vec![0.0; 6];
        let traj = integrate(&op, &s, &p, &cfg, &z0, &z0).unwrap();
        for sample in &traj.samples {
            let state = FlowState { t: sample.tau, z: sample.z.clone(), u: sample.aux.clone().unwrap() };
            let (_, dz) = flow_rhs(&state, &op, &s, &p).unwrap();
            for i in 0..6 {
                assert_eq!(dz[i], sample.velocity.as_ref().unwrap()[i]);
            }
        }
    }

    #[test]
    fn example1_run_reaches_the_known_solution() {
        let problem = presets::example1();
        let op = problem.operator();
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        let cfg = IntegratorConfig::adaptive(1e-9, 1000.0).with_samples(200);
        let z0 = vec![0.0; 6];
        let traj = integrate(&op, &s, &p, &cfg, &z0, &z0).unwrap();
        let last = traj.last().unwrap();
        let x_star = problem.known_solution().unwrap().0;
        let err = (0..4).map(|i| (last.z[i] - x_star[i]).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-2, "|x(T) - x*|_inf = {err}");
    }

    #[test]
    fn stiffness_budget_aborts_with_partial() {
        // the exponential schedule eventually outruns any explicit step
        let op = presets::example1().operator();
        let p = SolverParams::new(0.5, 8.0, 1.0 / 3.0).with_delta(2.0);
        let s = BetaSchedule::exponential_continuous(0.5, 1.0 / 3.0, 2.0).unwrap();
        let cfg = IntegratorConfig::adaptive(1e-9, 2000.0).with_samples(100).with_max_steps(50_000);
        let z0 = vec![0.0; 6];
        match integrate(&op, &s, &p, &cfg, &z0, &z0) {
            Err(Error::StepBudgetExhausted { at, partial, .. }) => {
                assert!(at > p.t0);
                assert!(!partial.is_empty());
            }
            other => panic!("expected a stiffness budget error, got {other:?}"),
        }
    }

    #[test]
    fn divergence_carries_partial_trajectory() {
        // anti-monotone scalar operator blows up
        let m = Matrix::from_fn(1, 1, |_, _| -1.0);
        let op = Operator::affine(m, vec![0.0]).unwrap();
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        let cfg = IntegratorConfig::rk4(0.5, 400.0).with_samples(50).with_force();
        let err = integrate(&op, &s, &p, &cfg, &[1.0], &[0.0]).unwrap_err();
        match err {
            Error::Divergence { partial, .. } => assert!(!partial.is_empty()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn growth_gate_rejects_unless_forced() {
        // power beta with r = 1 and theta = 0.4 violates the growth bound
        let op = scalar_op();
        let p = SolverParams::new(1.0, 8.0, 0.4);
        let s = BetaSchedule::power(1.0, 1.0).unwrap();
        let cfg = IntegratorConfig::rk4(0.01, 2.0).with_samples(10);
        assert!(matches!(
            integrate(&op, &s, &p, &cfg, &[1.0], &[0.0]),
            Err(Error::GrowthConditionFailed { .. })
        ));
        assert!(integrate(&op, &s, &p, &cfg.clone().with_force(), &[1.0], &[0.0]).is_ok());
    }

    #[test]
    fn energy_vanishes_at_solution() {
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        let (e, _) = EnergyParams::default_pair(&p);
        let z_star = [0.8, 0.6];
        let sample = Sample {
            tau: 3.0,
            z: z_star.to_vec(),
            v: vec![0.0, 0.0],
            velocity: Some(vec![0.0, 0.0]),
            aux: None,
        };
        let energy = energy_continuous(&sample, &s, &p, &e, &z_star).unwrap();
        assert_eq!(energy, 0.0);
    }

    #[test]
    fn energy_distance_coefficient_is_constant_at_r_one() {
        // at r = rho = 1 the distance term weighs 2 lambda (alpha - 1 - lambda)
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        let e = EnergyParams { lambda: 1.5, rho: 1.0 };
        let z_star = [0.0];
        for &t in &[1.0, 7.0, 123.0] {
            // zero out the other summands: z != z*, zdot chosen so the squared
            // bracket vanishes, V = 0
            let d = 1.0;
            let zdot = -2.0 * e.lambda * d / (2.0 * t);
            let sample = Sample {
                tau: t,
                z: vec![d],
                v: vec![0.0],
                velocity: Some(vec![zdot]),
                aux: None,
            };
            let energy = energy_continuous(&sample, &s, &p, &e, &z_star).unwrap();
            let expected = 2.0 * e.lambda * (p.alpha - 1.0 - e.lambda) * d * d;
            assert!((energy - expected).abs() < 1e-12, "t={t}: {energy} vs {expected}");
        }
    }

    #[test]
    fn energy_params_validation() {
        let p = SolverParams::new(1.0, 8.0, 0.25);
        assert!(EnergyParams { lambda: 1.5, rho: 1.0 }.validate(&p).is_ok());
        assert!(EnergyParams { lambda: 7.5, rho: 1.0 }.validate(&p).is_err()); // >= alpha - 1
        assert!(EnergyParams { lambda: 1.5, rho: 0.5 }.validate(&p).is_err()); // rho must be 1

        let p = SolverParams::new(0.5, 8.0, 0.3);
        assert!(EnergyParams { lambda: 2.0, rho: 0.45 }.validate(&p).is_ok());
        assert!(EnergyParams { lambda: 2.0, rho: 0.5 }.validate(&p).is_err()); // rho < r strictly

        let (e1, e2) = EnergyParams::default_pair(&p);
        assert!(e1.validate(&p).is_ok());
        assert!(e2.validate(&p).is_ok());
        assert!(e1.lambda != e2.lambda);
    }

    #[test]
    fn rk4_halving_shows_fourth_order() {
        let op = scalar_op();
        let p = SolverParams::new(1.0, 8.0, 0.25);
        let s = BetaSchedule::constant(1.0).unwrap();
        let t_end = 6.0;
        let reference = {
            let cfg = IntegratorConfig::rk4(1e-4, t_end).with_samples(2);
            integrate(&op, &s, &p, &cfg, &[1.0], &[0.0]).unwrap().last().unwrap().z[0]
        };
        let run = |h: f64| {
            let cfg = IntegratorConfig::rk4(h, t_end).with_samples(2);
            integrate(&op, &s, &p, &cfg, &[1.0], &[0.0]).unwrap().last().unwrap().z[0]
        };
        let e1 = (run(0.05) - reference).abs();
        let e2 = (run(0.025) - reference).abs();
        let ratio = e1 / e2;
        assert!((8.0..32.0).contains(&ratio), "ratio {ratio}, errors {e1} {e2}");
    }
}
