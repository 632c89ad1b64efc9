//! Trajectory diagnostics: gap functions, primal-dual metrics, decay
//! products, and rate fits. These turn the solvers' asymptotic claims
//! into quantities a test can check at desk scale.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // f64 math methods in no_std builds
use num_traits::Float;

use crate::linalg;
use crate::operator::LagrangianProblem;
use crate::trajectory::Trajectory;
use crate::Error;

/// Restricted gap `<z - z*, V(z)>`; nonnegative along monotone operators
/// with `V(z*) = 0`.
pub fn gap_function(z: &[f64], z_star: &[f64], v_of_z: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), z_star.len());
    debug_assert_eq!(z.len(), v_of_z.len());
    let mut acc = 0.0;
    for i in 0..z.len() {
        acc += (z[i] - z_star[i]) * v_of_z[i];
    }
    acc
}

#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PrimalDualMetrics {
    /// `f(x) - f(x*) + <l*, Ax - b>`; nonnegative along trajectories.
    pub lagrangian_gap: f64,
    /// `|Ax - b|`.
    pub feasibility: f64,
    /// `|f(x) - f(x*)|`.
    pub f_gap: f64,
    /// `|grad f(x) - grad f(x*)|`.
    pub grad_gap: f64,
    /// `|A^T (l - l*)|`.
    pub adjoint_gap: f64,
}

/// Optimality metrics of a primal-dual pair against the problem's known
/// solution.
pub fn primal_dual_metrics(
    x: &[f64],
    multiplier: &[f64],
    problem: &LagrangianProblem,
) -> Result<PrimalDualMetrics, Error> {
    let (x_star, l_star) = problem
        .known_solution()
        .ok_or(Error::UnsupportedMetric("primal-dual metrics need a known solution"))?;
    if x.len() != problem.primal_dim() {
        return Err(Error::DimensionMismatch { expected: problem.primal_dim(), got: x.len() });
    }
    if multiplier.len() != problem.dual_dim() {
        return Err(Error::DimensionMismatch { expected: problem.dual_dim(), got: multiplier.len() });
    }

    let a = problem.constraint_matrix();
    let m = problem.dual_dim();
    let n = problem.primal_dim();

    let mut ax = alloc::vec![0.0; m];
    a.matvec(x, &mut ax);
    let residual: Vec<f64> = (0..m).map(|i| ax[i] - problem.rhs()[i]).collect();

    let f_x = problem.objective_value(x);
    let f_star = problem.objective_value(x_star);

    let grad_diff = linalg::sub(&problem.gradient(x), &problem.gradient(x_star));

    let dual_diff = linalg::sub(multiplier, l_star);
    let mut at_dual = alloc::vec![0.0; n];
    a.matvec_transpose(&dual_diff, &mut at_dual);

    Ok(PrimalDualMetrics {
        lagrangian_gap: f_x - f_star + linalg::dot(l_star, &residual),
        feasibility: linalg::norm(&residual),
        f_gap: (f_x - f_star).abs(),
        grad_gap: linalg::norm(&grad_diff),
        adjoint_gap: linalg::norm(&at_dual),
    })
}

/// Per-sample products realizing the theorem rates: `tau^{2r} beta |V|`,
/// `tau^{2r} beta <z - z*, V>`, and `tau^rho |velocity or step|`.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DecayProducts {
    pub tau: Vec<f64>,
    pub operator: Vec<f64>,
    pub gap: Vec<f64>,
    /// Absent when the trajectory carries no velocities.
    pub step: Option<Vec<f64>>,
}

/// Computes decay products along a trajectory. `rho` defaults to `r`
/// (justified when the boundedness report holds); pass a smaller value
/// for the conservative variant.
pub fn decay_products(
    traj: &Trajectory,
    z_star: &[f64],
    rho: Option<f64>,
) -> Result<DecayProducts, Error> {
    if traj.is_empty() {
        return Err(Error::InvalidInput("decay products need a nonempty trajectory".into()));
    }
    let r = traj.params.r;
    let rho = rho.unwrap_or(r);
    let mut tau = Vec::with_capacity(traj.len());
    let mut operator = Vec::with_capacity(traj.len());
    let mut gap = Vec::with_capacity(traj.len());
    let mut step = Some(Vec::with_capacity(traj.len()));
    for s in &traj.samples {
        let beta = traj.schedule.value(s.tau)?;
        let weight = s.tau.powf(2.0 * r) * beta;
        tau.push(s.tau);
        operator.push(weight * linalg::norm(&s.v));
        gap.push(weight * gap_function(&s.z, z_star, &s.v));
        match (&mut step, &s.velocity) {
            (Some(list), Some(vel)) => list.push(s.tau.powf(rho) * linalg::norm(vel)),
            _ => step = None,
        }
    }
    Ok(DecayProducts { tau, operator, gap, step })
}

/// Trailing window over which a rate is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FitWindow {
    /// `tau >= tau_end / 10`.
    #[default]
    LastDecade,
    /// Last `fraction` of the linear `tau` span.
    TailFraction(f64),
}

impl FitWindow {
    fn start(&self, tau_first: f64, tau_last: f64) -> f64 {
        match self {
            FitWindow::LastDecade => tau_last / 10.0,
            FitWindow::TailFraction(f) => tau_last - f.clamp(0.0, 1.0) * (tau_last - tau_first),
        }
    }
}

/// A fitted decay rate over the trailing window of a series.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RateReport {
    pub metric: String,
    /// Log-log slope, or the coefficient of `t^{1-r}/(1-r)` for
    /// exponential fits.
    pub slope: f64,
    pub intercept: f64,
    /// `(tau_lo, tau_hi)` actually used.
    pub window: (f64, f64),
    /// RMS residual of the least-squares fit in log space.
    pub residual_rms: f64,
    pub terminal_value: f64,
    pub points: usize,
}

impl RateReport {
    /// Whether the fitted series decays at all (slope clearly below zero).
    pub fn indicates_decay(&self) -> bool {
        self.slope < -1e-6
    }
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let mut rss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = y - (intercept + slope * x);
        rss += e * e;
    }
    (slope, intercept, (rss / n).sqrt())
}

/// Windowed `(taus, log values, (tau_lo, tau_hi))` triple.
type WindowedSeries = (Vec<f64>, Vec<f64>, (f64, f64));

fn windowed(
    taus: &[f64],
    values: &[f64],
    window: FitWindow,
    metric: &str,
) -> Result<WindowedSeries, Error> {
    if taus.len() != values.len() || taus.is_empty() {
        return Err(Error::FitDomain(alloc::format!("{metric}: empty or ragged series")));
    }
    let lo = window.start(taus[0], taus[taus.len() - 1]);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, v) in taus.iter().zip(values) {
        if *t >= lo {
            if !(*v > 0.0) {
                return Err(Error::FitDomain(alloc::format!(
                    "{metric}: nonpositive value {v} at tau = {t}; floor the series first"
                )));
            }
            xs.push(*t);
            ys.push(v.ln());
        }
    }
    if xs.len() < 10 {
        return Err(Error::FitDomain(alloc::format!(
            "{metric}: only {} samples in the fit window, need >= 10",
            xs.len()
        )));
    }
    let span = (xs[0], xs[xs.len() - 1]);
    Ok((xs, ys, span))
}

/// Least-squares slope of `log(value)` against `log(tau)` over the
/// trailing window.
pub fn fit_loglog_slope(
    taus: &[f64],
    values: &[f64],
    window: FitWindow,
    metric: &str,
) -> Result<RateReport, Error> {
    let (xs, ys, span) = windowed(taus, values, window, metric)?;
    let logx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let (slope, intercept, residual_rms) = least_squares(&logx, &ys);
    Ok(RateReport {
        metric: metric.into(),
        slope,
        intercept,
        window: span,
        residual_rms,
        terminal_value: values[values.len() - 1],
        points: xs.len(),
    })
}

/// Least-squares slope of `log(value)` against `tau^{1-r}/(1-r)` over
/// the trailing window; for exponential schedules the expected slope is
/// `-(1/theta - delta)`.
pub fn fit_exponential_rate(
    taus: &[f64],
    values: &[f64],
    r: f64,
    window: FitWindow,
    metric: &str,
) -> Result<RateReport, Error> {
    if r >= 1.0 {
        return Err(Error::FitDomain("exponential rate fit needs r < 1".into()));
    }
    let (xs, ys, span) = windowed(taus, values, window, metric)?;
    let sx: Vec<f64> = xs.iter().map(|x| x.powf(1.0 - r) / (1.0 - r)).collect();
    let (slope, intercept, residual_rms) = least_squares(&sx, &ys);
    Ok(RateReport {
        metric: metric.into(),
        slope,
        intercept,
        window: span,
        residual_rms,
        terminal_value: values[values.len() - 1],
        points: xs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum QuadFormSign {
    /// `A |X|^2 + 2B <X, Y> + C |Y|^2 <= 0` for all `X, Y`.
    CertifiedNonpositive,
    /// `A |X|^2 + 2B <X, Y> + C |Y|^2 >= 0` for all `X, Y`.
    CertifiedNonnegative,
    Indeterminate,
}

/// Sign certificate for the quadratic form `A |X|^2 + 2B <X,Y> + C |Y|^2`
/// via the discriminant test `B^2 - AC <= 0`.
pub fn quad_form_sign(a: f64, b: f64, c: f64) -> Result<QuadFormSign, Error> {
    if a == 0.0 {
        return Err(Error::InvalidInput("quadratic form certificate needs A != 0".into()));
    }
    Ok(if b * b - a * c <= 0.0 {
        if a < 0.0 {
            QuadFormSign::CertifiedNonpositive
        } else {
            QuadFormSign::CertifiedNonnegative
        }
    } else {
        QuadFormSign::Indeterminate
    })
}

/// First index from which `values` stays nonincreasing (up to `tol`) for
/// at least `consecutive` successive steps.
pub fn detect_transient(values: &[f64], consecutive: usize, tol: f64) -> Option<usize> {
    if values.len() < 2 {
        return None;
    }
    let mut run = 0usize;
    let mut start = 0usize;
    for i in 0..values.len() - 1 {
        if values[i + 1] <= values[i] + tol {
            if run == 0 {
                start = i;
            }
            run += 1;
            if run >= consecutive {
                return Some(start);
            }
        } else {
            run = 0;
        }
    }
    // accept a shorter terminal run when the series ends monotone
    if run > 0 && run + 1 >= values.len() - start {
        Some(start)
    } else {
        None
    }
}

/// Count of increases beyond `tol` after `start`.
pub fn monotonicity_violations(values: &[f64], start: usize, tol: f64) -> usize {
    let mut count = 0;
    for i in start..values.len().saturating_sub(1) {
        if values[i + 1] > values[i] + tol {
            count += 1;
        }
    }
    count
}

/// Cauchy profile of the iterates: for each sample `k`, the supremum of
/// `|z^j - z^k|` over later samples `j`. A finite-dimensional stand-in
/// for convergence of the iterates.
pub fn iterate_cauchy(traj: &Trajectory) -> Vec<f64> {
    let n = traj.len();
    let mut out = alloc::vec![0.0; n];
    for k in 0..n {
        let zk = &traj.samples[k].z;
        let mut sup: f64 = 0.0;
        for j in k + 1..n {
            sup = sup.max(linalg::norm(&linalg::sub(&traj.samples[j].z, zk)));
        }
        out[k] = sup;
    }
    out
}
