//! Time-rescaling schedules `beta` and the growth conditions they must
//! satisfy.
//!
//! The continuous condition bounds `sup_t t^r (beta'/beta + 2r/t)` by
//! `1/theta`; the discrete one bounds
//! `sup_k k^r ((beta_k - beta_{k-1})/beta_k + 2r/k)` by `1/(2 theta)`.
//! Both checks work with log-derivatives and log-ratios so that fast
//! exponential schedules can be audited far beyond the range where
//! `beta` itself overflows.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // f64 math methods in no_std builds
use num_traits::Float;

use crate::params::SolverParams;
use crate::Error;

/// A positive, nondecreasing time-rescaling family.
///
/// The two exponential families solve the growth condition with equality
/// at slack `delta`: the continuous one has
/// `beta(t) = t^{-2r} exp((1/theta - delta) t^{1-r}/(1-r))`, the discrete
/// one replaces `1/theta` by `1/(2 theta)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum BetaSchedule {
    Constant { c: f64 },
    Power { exponent: f64, scale: f64 },
    ExponentialContinuous { r: f64, theta: f64, delta: f64 },
    ExponentialDiscrete { r: f64, theta: f64, delta: f64 },
    /// Escape hatch: tabulated `(tau, value)` pairs with linear
    /// interpolation and finite-difference derivatives.
    Tabulated { taus: Vec<f64>, values: Vec<f64> },
}

impl BetaSchedule {
    pub fn constant(c: f64) -> Result<Self, Error> {
        if !(c > 0.0) {
            return Err(Error::ScheduleInvalid(format!("constant schedule needs c > 0, got {c}")));
        }
        Ok(BetaSchedule::Constant { c })
    }

    pub fn power(exponent: f64, scale: f64) -> Result<Self, Error> {
        if !(exponent >= 0.0) || !(scale > 0.0) {
            return Err(Error::ScheduleInvalid(format!(
                "power schedule needs exponent >= 0 and scale > 0, got ({exponent}, {scale})"
            )));
        }
        Ok(BetaSchedule::Power { exponent, scale })
    }

    pub fn exponential_continuous(r: f64, theta: f64, delta: f64) -> Result<Self, Error> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::ScheduleInvalid(format!(
                "exponential schedule needs r in [0, 1), got {r}"
            )));
        }
        if !(theta > 0.0 && delta > 0.0 && delta < 1.0 / theta) {
            return Err(Error::ScheduleInvalid(format!(
                "exponential continuous schedule needs 0 < delta < 1/theta, got theta={theta} delta={delta}"
            )));
        }
        Ok(BetaSchedule::ExponentialContinuous { r, theta, delta })
    }

    pub fn exponential_discrete(r: f64, theta: f64, delta: f64) -> Result<Self, Error> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::ScheduleInvalid(format!(
                "exponential schedule needs r in [0, 1), got {r}"
            )));
        }
        if !(theta > 0.0 && delta > 0.0 && delta < 0.5 / theta) {
            return Err(Error::ScheduleInvalid(format!(
                "exponential discrete schedule needs 0 < delta < 1/(2 theta), got theta={theta} delta={delta}"
            )));
        }
        Ok(BetaSchedule::ExponentialDiscrete { r, theta, delta })
    }

    pub fn tabulated(taus: Vec<f64>, values: Vec<f64>) -> Result<Self, Error> {
        if taus.len() != values.len() || taus.len() < 2 {
            return Err(Error::ScheduleInvalid("tabulated schedule needs >= 2 (tau, value) pairs".into()));
        }
        if taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::ScheduleInvalid("tabulated taus must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::ScheduleInvalid("tabulated values must be positive and finite".into()));
        }
        Ok(BetaSchedule::Tabulated { taus, values })
    }

    /// Growth-rate coefficient in the exponent of the exponential
    /// families: `1/theta - delta` (continuous) or `1/(2 theta) - delta`
    /// (discrete). `None` for the other families.
    pub fn exponential_rate(&self) -> Option<f64> {
        match self {
            BetaSchedule::ExponentialContinuous { theta, delta, .. } => Some(1.0 / theta - delta),
            BetaSchedule::ExponentialDiscrete { theta, delta, .. } => Some(0.5 / theta - delta),
            _ => None,
        }
    }

    fn check_t(t: f64) -> Result<(), Error> {
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!("schedule evaluated at t = {t} <= 0")));
        }
        Ok(())
    }

    /// `beta(t)`.
    pub fn value(&self, t: f64) -> Result<f64, Error> {
        Self::check_t(t)?;
        Ok(match self {
            BetaSchedule::Constant { c } => *c,
            BetaSchedule::Power { exponent, scale } => scale * t.powf(*exponent),
            BetaSchedule::ExponentialContinuous { r, .. } | BetaSchedule::ExponentialDiscrete { r, .. } => {
                let c = self.exponential_rate().unwrap();
                t.powf(-2.0 * r) * (c * t.powf(1.0 - r) / (1.0 - r)).exp()
            }
            BetaSchedule::Tabulated { taus, values } => interp(taus, values, t),
        })
    }

    /// `beta'(t)`, analytic per family (finite differences for tabulated).
    pub fn derivative(&self, t: f64) -> Result<f64, Error> {
        Self::check_t(t)?;
        Ok(match self {
            BetaSchedule::Constant { .. } => 0.0,
            BetaSchedule::Power { exponent, scale } => scale * exponent * t.powf(exponent - 1.0),
            BetaSchedule::ExponentialContinuous { .. } | BetaSchedule::ExponentialDiscrete { .. } => {
                self.value(t)? * self.log_derivative(t)?
            }
            BetaSchedule::Tabulated { taus, values } => segment_slope(taus, values, t),
        })
    }

    /// `beta'(t) / beta(t)`; immune to overflow of `beta` itself.
    pub fn log_derivative(&self, t: f64) -> Result<f64, Error> {
        Self::check_t(t)?;
        Ok(match self {
            BetaSchedule::Constant { .. } => 0.0,
            BetaSchedule::Power { exponent, .. } => exponent / t,
            BetaSchedule::ExponentialContinuous { r, .. } | BetaSchedule::ExponentialDiscrete { r, .. } => {
                let c = self.exponential_rate().unwrap();
                -2.0 * r / t + c * t.powf(-r)
            }
            BetaSchedule::Tabulated { taus, values } => {
                segment_slope(taus, values, t) / interp(taus, values, t)
            }
        })
    }

    /// `beta_k` for `k >= 1`; the closed-form families are sampled at
    /// integer arguments, the tabulated family is interpolated.
    pub fn seq(&self, k: usize) -> Result<f64, Error> {
        if k == 0 {
            return Err(Error::InvalidInput("schedule sequence index k must be >= 1".into()));
        }
        self.value(k as f64)
    }

    /// `ln beta_k`; usable where `beta_k` itself would overflow.
    pub fn log_seq(&self, k: usize) -> Result<f64, Error> {
        if k == 0 {
            return Err(Error::InvalidInput("schedule sequence index k must be >= 1".into()));
        }
        let t = k as f64;
        Ok(match self {
            BetaSchedule::Constant { c } => c.ln(),
            BetaSchedule::Power { exponent, scale } => scale.ln() + exponent * t.ln(),
            BetaSchedule::ExponentialContinuous { r, .. } | BetaSchedule::ExponentialDiscrete { r, .. } => {
                let c = self.exponential_rate().unwrap();
                -2.0 * r * t.ln() + c * t.powf(1.0 - r) / (1.0 - r)
            }
            BetaSchedule::Tabulated { taus, values } => interp(taus, values, t).ln(),
        })
    }

    /// Relative backward increment `(beta_k - beta_{k-1}) / beta_k`,
    /// with the stepper convention `beta_0 := beta_1`.
    pub fn relative_increment(&self, k: usize) -> Result<f64, Error> {
        if k <= 1 {
            return if k == 1 { Ok(0.0) } else { Err(Error::InvalidInput("k must be >= 1".into())) };
        }
        // 1 - beta_{k-1}/beta_k through logs
        let d = self.log_seq(k - 1)? - self.log_seq(k)?;
        Ok(-d.exp_m1())
    }

    /// First time `>= t0` from which the schedule is nondecreasing.
    ///
    /// The exponential families decay like `t^{-2r}` before the
    /// exponential takes over, so they become nondecreasing only from
    /// `(2r / rate)^{1/(1-r)}`.
    pub fn nondecreasing_from(&self, t0: f64) -> f64 {
        match self {
            BetaSchedule::Constant { .. } | BetaSchedule::Power { .. } => t0,
            BetaSchedule::ExponentialContinuous { r, .. } | BetaSchedule::ExponentialDiscrete { r, .. } => {
                if *r == 0.0 {
                    t0
                } else {
                    let c = self.exponential_rate().unwrap();
                    t0.max((2.0 * r / c).powf(1.0 / (1.0 - r)))
                }
            }
            BetaSchedule::Tabulated { taus, values } => {
                let mut from = taus[0];
                for i in 1..values.len() {
                    if values[i] < values[i - 1] {
                        from = taus[i];
                    }
                }
                from.max(t0)
            }
        }
    }
}

fn interp(taus: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= taus[0] {
        return values[0];
    }
    if t >= taus[taus.len() - 1] {
        return values[values.len() - 1];
    }
    let i = match taus.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(i) => return values[i],
        Err(i) => i,
    };
    let w = (t - taus[i - 1]) / (taus[i] - taus[i - 1]);
    values[i - 1] + w * (values[i] - values[i - 1])
}

fn segment_slope(taus: &[f64], values: &[f64], t: f64) -> f64 {
    let n = taus.len();
    if t <= taus[0] || t >= taus[n - 1] {
        return 0.0;
    }
    let i = taus.partition_point(|x| *x < t).max(1).min(n - 1);
    (values[i] - values[i - 1]) / (taus[i] - taus[i - 1])
}

/// Sampling grid for numerical supremum audits: `points` geometrically
/// spaced samples over `[t0, span_factor * t0]`.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub points: usize,
    pub span_factor: f64,
    /// Pass margin: the check requires `sup < bound - margin`.
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points: 10_000, span_factor: 1e6, margin: 0.0 }
    }
}

/// Outcome of the continuous growth-condition check.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ContinuousGrowthReport {
    /// Supremum of `g(t) = t^r (beta'/beta + 2r/t)`: analytic where a
    /// closed form exists, otherwise the grid maximum.
    pub sup: f64,
    /// Maximum of `g` over the sampling grid (always computed).
    pub grid_sup: f64,
    /// `1/theta`.
    pub bound: f64,
    pub passes: bool,
    pub closed_form: bool,
}

/// Checks `sup_{t >= t0} t^r (beta'(t)/beta(t) + 2r/t) < 1/theta`.
pub fn check_growth_continuous(
    schedule: &BetaSchedule,
    p: &SolverParams,
    grid: &GridSpec,
) -> Result<ContinuousGrowthReport, Error> {
    let r = p.r;
    let bound = 1.0 / p.theta;
    let g = |t: f64| -> Result<f64, Error> {
        Ok(t.powf(r) * (schedule.log_derivative(t)? + 2.0 * r / t))
    };

    let mut grid_sup = f64::NEG_INFINITY;
    let ratio = grid.span_factor.powf(1.0 / (grid.points.max(2) - 1) as f64);
    let mut t = p.t0;
    for _ in 0..grid.points.max(2) {
        grid_sup = grid_sup.max(g(t)?);
        t *= ratio;
    }

    let closed = match schedule {
        BetaSchedule::Constant { .. } => Some(closed_form_power_sup(2.0 * r, r, p.t0)),
        BetaSchedule::Power { exponent, .. } => Some(closed_form_power_sup(exponent + 2.0 * r, r, p.t0)),
        BetaSchedule::ExponentialContinuous { .. } | BetaSchedule::ExponentialDiscrete { .. } => {
            schedule.exponential_rate()
        }
        BetaSchedule::Tabulated { .. } => None,
    };

    let sup = closed.unwrap_or(grid_sup);
    Ok(ContinuousGrowthReport {
        sup,
        grid_sup,
        bound,
        passes: sup < bound - grid.margin,
        closed_form: closed.is_some(),
    })
}

/// Supremum of `coef * t^{r-1}` over `[t0, inf)` with `coef >= 0`.
fn closed_form_power_sup(coef: f64, r: f64, t0: f64) -> f64 {
    if r == 1.0 {
        coef
    } else {
        coef * t0.powf(r - 1.0)
    }
}

/// Outcome of the discrete growth-condition check.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DiscreteGrowthReport {
    /// Maximum of `g_k` over `k` in `[k0, k_max]`.
    pub sup: f64,
    /// `1/(2 theta)`.
    pub bound: f64,
    pub passes: bool,
    /// Smallest index from which every sampled `g_k` stays below the bound.
    pub first_passing_k0: Option<usize>,
    /// For the discrete exponential family: the limit `1/(2 theta) - delta`
    /// that `g_k` approaches.
    pub exponential_limit: Option<f64>,
}

/// Checks `sup_{k >= k0} k^r ((beta_k - beta_{k-1})/beta_k + 2r/k) < 1/(2 theta)`
/// over the sampled range `k0 <= k <= k_max`.
pub fn check_growth_discrete(
    schedule: &BetaSchedule,
    p: &SolverParams,
    k_max: usize,
    margin: f64,
) -> Result<DiscreteGrowthReport, Error> {
    let k0 = p.k0.max(1);
    if k_max < k0 + 1 {
        return Err(Error::InvalidInput(format!("k_max = {k_max} must be >= k0 + 1 = {}", k0 + 1)));
    }
    let r = p.r;
    let bound = 0.5 / p.theta;

    let g_at = |k: usize| -> Result<f64, Error> {
        let kf = k as f64;
        Ok(kf.powf(r) * (schedule.relative_increment(k)? + 2.0 * r / kf))
    };

    let mut gs = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        gs.push(g_at(k)?);
    }
    let sup = gs[k0 - 1..].iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));

    // smallest index whose suffix stays below the bound
    let mut first_passing = None;
    let mut suffix_ok = true;
    for k in (1..=k_max).rev() {
        suffix_ok &= gs[k - 1] < bound - margin;
        if suffix_ok {
            first_passing = Some(k);
        } else {
            break;
        }
    }

    Ok(DiscreteGrowthReport {
        sup,
        bound,
        passes: sup < bound - margin,
        first_passing_k0: first_passing,
        exponential_limit: match schedule {
            BetaSchedule::ExponentialDiscrete { .. } => schedule.exponential_rate(),
            _ => None,
        },
    })
}

/// Slacks of the three sequence inequalities entailed by the growth
/// condition at slack `delta`, normalized by `beta_k` (so they stay
/// finite for exponentially growing schedules):
///
/// - `g1`: `(2 r theta k^{r-1} - 1) + theta k^r (1 - beta_{k-1}/beta_k) + delta theta`
/// - `g2`: `theta k^r (1 - beta_{k-1}/beta_k) - (1 - 2 r theta k^{r-1} - delta theta)`
/// - `g3`: `beta_k/beta_{k-1} - M_beta`, with
///   `M_beta = k^r / (2 r k^{r-1} - 1/theta + delta + k^r)`
///
/// Each inequality holds iff its slack is `<= 0`. `g3` is `None` when its
/// denominator is nonpositive (small-k regime).
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SequenceInequalities {
    pub g1: f64,
    pub g2: f64,
    pub g3: Option<f64>,
    pub m_beta: Option<f64>,
}

impl SequenceInequalities {
    pub fn all_hold(&self) -> bool {
        self.g1 <= 0.0 && self.g2 <= 0.0 && self.g3.is_none_or(|g| g <= 0.0)
    }
}

pub fn sequence_inequalities(
    schedule: &BetaSchedule,
    p: &SolverParams,
    k: usize,
) -> Result<SequenceInequalities, Error> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let (r, theta, delta) = (p.r, p.theta, p.delta);
    let kf = k as f64;
    let rel_inc = schedule.relative_increment(k)?; // (beta_k - beta_{k-1})/beta_k
    let ratio_prev = 1.0 - rel_inc; // beta_{k-1}/beta_k

    let g1 = (2.0 * r * theta * kf.powf(r - 1.0) - 1.0) + theta * kf.powf(r) * rel_inc + delta * theta;
    let g2 = theta * kf.powf(r) * rel_inc - (1.0 - 2.0 * r * theta * kf.powf(r - 1.0) - delta * theta);

    let denom = 2.0 * r * kf.powf(r - 1.0) - 1.0 / theta + delta + kf.powf(r);
    let (g3, m_beta) = if denom > 0.0 && ratio_prev > 0.0 {
        let m = kf.powf(r) / denom;
        (Some(1.0 / ratio_prev - m), Some(m))
    } else {
        (None, None)
    };

    Ok(SequenceInequalities { g1, g2, g3, m_beta })
}

/// Slacks (`lhs - rhs`) of the six elementary power-difference
/// inequalities used throughout the discrete analysis; each holds iff
/// its slack is `<= 0`. Valid for `k >= 1`, `r` in `[0, 1]`, `sigma <= 0`.
#[derive(Debug, Clone)]
pub struct AuxInequalities {
    pub slacks: [f64; 6],
}

impl AuxInequalities {
    pub fn all_hold(&self) -> bool {
        self.slacks.iter().all(|s| *s <= 0.0)
    }
}

pub fn aux_inequalities(k: usize, r: f64, sigma: f64) -> AuxInequalities {
    debug_assert!(k >= 1);
    debug_assert!((0.0..=1.0).contains(&r));
    debug_assert!(sigma <= 0.0);
    let k = k as f64;
    let kp = k + 1.0;

    // (k+1)^r - k^r <= r k^{r-1}
    let a1 = (kp.powf(r) - k.powf(r)) - r * k.powf(r - 1.0);
    // (k+1)^{3r} - k^{3r} <= 3r k^{3r-1} + 3r k^{3r-2} + r k^{3r-3}
    let a2 = (kp.powf(3.0 * r) - k.powf(3.0 * r))
        - (3.0 * r * k.powf(3.0 * r - 1.0) + 3.0 * r * k.powf(3.0 * r - 2.0) + r * k.powf(3.0 * r - 3.0));
    // (k+1)^{2r} - k^{2r} <= 2r k^{2r-1} + r k^{2r-2}
    let a3 = (kp.powf(2.0 * r) - k.powf(2.0 * r)) - (2.0 * r * k.powf(2.0 * r - 1.0) + r * k.powf(2.0 * r - 2.0));
    // (k+1)^sigma - k^sigma <= sigma k^{sigma-1} + sigma (sigma-1) k^{sigma-2}
    let a4 = (kp.powf(sigma) - k.powf(sigma))
        - (sigma * k.powf(sigma - 1.0) + sigma * (sigma - 1.0) * k.powf(sigma - 2.0));
    // |(k+1)^sigma - k^sigma| <= |sigma| k^{sigma-1}
    let a5 = (kp.powf(sigma) - k.powf(sigma)).abs() - sigma.abs() * k.powf(sigma - 1.0);
    // |2r k^{2r-1} - [(k+1)^{2r} - k^{2r}]| <= 2r |2r-1| k^{2r-2}
    let a6 = (2.0 * r * k.powf(2.0 * r - 1.0) - (kp.powf(2.0 * r) - k.powf(2.0 * r))).abs()
        - 2.0 * r * (2.0 * r - 1.0).abs() * k.powf(2.0 * r - 2.0);

    AuxInequalities { slacks: [a1, a2, a3, a4, a5, a6] }
}
