//! Trajectory records shared by the continuous and discrete solvers.

use alloc::vec::Vec;

use crate::linalg;
use crate::params::SolverParams;
use crate::schedule::BetaSchedule;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TrajectoryKind {
    Continuous,
    Discrete,
}

/// One emitted state.
///
/// `tau` is time for continuous runs and the iteration index for
/// discrete ones. `velocity` is the reconstructed `dz/dt` (continuous)
/// or the step `z^k - z^{k-1}` (discrete). `aux` carries the auxiliary
/// variable `u` of the first-order reformulation when the continuous
/// integrator produced the sample.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sample {
    pub tau: f64,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub velocity: Option<Vec<f64>>,
    pub aux: Option<Vec<f64>>,
}

/// Ordered samples of one solver run plus the parameter snapshot that
/// produced them.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub samples: Vec<Sample>,
    pub params: SolverParams,
    pub schedule: BetaSchedule,
    /// Maximum of `|z|` over every accepted step (not just the emitted
    /// samples); the empirical boundedness report.
    pub max_z_norm: f64,
    /// Total accepted steps / iterations behind the samples.
    pub total_steps: usize,
}

impl Trajectory {
    pub fn new(kind: TrajectoryKind, params: SolverParams, schedule: BetaSchedule) -> Self {
        Trajectory { kind, samples: Vec::new(), params, schedule, max_z_norm: 0.0, total_steps: 0 }
    }

    /// Appends a sample, enforcing strictly increasing `tau` and
    /// consistent dimensions.
    pub fn push(&mut self, sample: Sample) -> Result<(), Error> {
        if let Some(last) = self.samples.last() {
            if sample.tau <= last.tau {
                return Err(Error::InvalidInput(alloc::format!(
                    "trajectory samples must have strictly increasing tau ({} after {})",
                    sample.tau,
                    last.tau
                )));
            }
            if sample.z.len() != last.z.len() {
                return Err(Error::DimensionMismatch { expected: last.z.len(), got: sample.z.len() });
            }
        }
        if sample.v.len() != sample.z.len() {
            return Err(Error::DimensionMismatch { expected: sample.z.len(), got: sample.v.len() });
        }
        self.max_z_norm = self.max_z_norm.max(linalg::norm(&sample.z));
        self.samples.push(sample);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// `|V(z)|` per sample.
    pub fn operator_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| linalg::norm(&s.v)).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tau).collect()
    }
}
