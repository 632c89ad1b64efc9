//! Solver parameters and their admissibility rules.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::Error;

/// Parameters of the damped flow and of its implicit discretization.
///
/// `r` is the damping exponent (the damping term is `alpha / t^r`),
/// `theta` weighs the operator-derivative damping, `delta` is the slack
/// used by the exponential schedule families, `t0` / `k0` are the
/// continuous and discrete start points.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverParams {
    pub r: f64,
    pub alpha: f64,
    pub theta: f64,
    pub delta: f64,
    pub t0: f64,
    pub k0: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { r: 1.0, alpha: 8.0, theta: 0.25, delta: 0.0, t0: 1.0, k0: 1 }
    }
}

impl SolverParams {
    pub fn new(r: f64, alpha: f64, theta: f64) -> Self {
        SolverParams { r, alpha, theta, ..SolverParams::default() }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    fn common_violations(&self, out: &mut Vec<String>) {
        if !(self.alpha > 0.0) {
            out.push(format!("alpha > 0 required (got alpha = {})", self.alpha));
        }
        if !(self.theta > 0.0) {
            out.push(format!("theta > 0 required (got theta = {})", self.theta));
        }
        if !(self.t0 > 0.0) {
            out.push(format!("t0 > 0 required (got t0 = {})", self.t0));
        }
        if self.k0 < 1 {
            out.push("k0 >= 1 required".into());
        }
    }

    /// Violations of the continuous-scheme admissibility box.
    ///
    /// Requires `r` in `[0, 1]`; `theta > 2/alpha` when `r < 1`;
    /// `2/(alpha+1) <= theta < 1/2` when `r = 1`.
    pub fn continuous_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        self.common_violations(&mut v);
        if !(0.0..=1.0).contains(&self.r) {
            v.push(format!("r in [0, 1] required (got r = {})", self.r));
        } else if self.r < 1.0 {
            if !(self.theta > 2.0 / self.alpha) {
                v.push(format!(
                    "theta > 2/alpha = {} required for r < 1 (got theta = {})",
                    2.0 / self.alpha,
                    self.theta
                ));
            }
        } else {
            if !(self.theta >= 2.0 / (self.alpha + 1.0) && self.theta < 0.5) {
                v.push(format!(
                    "2/(alpha+1) = {} <= theta < 1/2 required for r = 1 (got theta = {})",
                    2.0 / (self.alpha + 1.0),
                    self.theta
                ));
            }
        }
        v
    }

    /// Violations of the discrete-scheme admissibility box.
    ///
    /// Requires `r` in `(0, 1]`; `theta > 2/alpha` when `r < 1`;
    /// `2/(alpha+1) <= theta < 1/4` when `r = 1`.
    pub fn discrete_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        self.common_violations(&mut v);
        if !(self.r > 0.0 && self.r <= 1.0) {
            v.push(format!("r in (0, 1] required for the discrete scheme (got r = {})", self.r));
        } else if self.r < 1.0 {
            if !(self.theta > 2.0 / self.alpha) {
                v.push(format!(
                    "theta > 2/alpha = {} required for r < 1 (got theta = {})",
                    2.0 / self.alpha,
                    self.theta
                ));
            }
        } else {
            if !(self.theta >= 2.0 / (self.alpha + 1.0) && self.theta < 0.25) {
                v.push(format!(
                    "2/(alpha+1) = {} <= theta < 1/4 required for r = 1 (got theta = {})",
                    2.0 / (self.alpha + 1.0),
                    self.theta
                ));
            }
        }
        v
    }

    /// Slack bound for the exponential schedule in continuous time:
    /// `0 < delta < 1/theta`, and `r < 1`.
    pub fn exponential_continuous_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.r >= 1.0 {
            v.push("exponential schedule requires r < 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0 / self.theta) {
            v.push(format!(
                "0 < delta < 1/theta = {} required for the exponential schedule (got delta = {})",
                1.0 / self.theta,
                self.delta
            ));
        }
        v
    }

    /// Slack bound for the exponential schedule in discrete time:
    /// `0 < delta < 1/(2 theta)`, and `r < 1`.
    pub fn exponential_discrete_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.r >= 1.0 {
            v.push("exponential schedule requires r < 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 0.5 / self.theta) {
            v.push(format!(
                "0 < delta < 1/(2 theta) = {} required for the exponential schedule (got delta = {})",
                0.5 / self.theta,
                self.delta
            ));
        }
        v
    }

    pub fn validate_continuous(&self) -> Result<(), Error> {
        let v = self.continuous_violations();
        if v.is_empty() { Ok(()) } else { Err(Error::ParamsInvalid(v)) }
    }

    pub fn validate_discrete(&self) -> Result<(), Error> {
        let v = self.discrete_violations();
        if v.is_empty() { Ok(()) } else { Err(Error::ParamsInvalid(v)) }
    }
}
