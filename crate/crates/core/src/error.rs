use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::trajectory::Trajectory;

/// Errors produced across the solver suite.
///
/// Solver failures that interrupt a run ([`Error::Divergence`],
/// [`Error::StepUnderflow`], [`Error::DiscreteStep`]) carry the partial
/// trajectory accumulated up to the last finite state so callers can
/// flush what was computed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid schedule: {0}")]
    ScheduleInvalid(String),

    /// One message per violated admissibility constraint.
    #[error("parameter constraints violated: {}", .0.join("; "))]
    ParamsInvalid(Vec<String>),

    #[error("growth condition violated: sup {sup} >= bound {bound}")]
    GrowthConditionFailed { sup: f64, bound: f64 },

    #[error("ill-posed step at k={k}: resolvent parameter gamma={gamma} <= 0")]
    IllPosedStep { k: usize, gamma: f64 },

    #[error("singular linear system")]
    SingularSystem,

    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual})")]
    NewtonNoConvergence { iterations: usize, residual: f64 },

    #[error("trajectory diverged at t={at}")]
    Divergence { at: f64, partial: Box<Trajectory> },

    #[error("adaptive step underflow at t={at} (step {step}); system too stiff")]
    StepUnderflow { at: f64, step: f64, partial: Box<Trajectory> },

    #[error("step budget of {budget} exhausted at t={at}; system too stiff for the horizon")]
    StepBudgetExhausted { at: f64, budget: usize, partial: Box<Trajectory> },

    #[error("discrete step {k} failed: {source}")]
    DiscreteStep {
        k: usize,
        #[source]
        source: Box<Error>,
        partial: Box<Trajectory>,
    },

    #[error("metric unavailable: {0}")]
    UnsupportedMetric(&'static str),

    #[error("rate fit domain error: {0}")]
    FitDomain(String),
}

impl Error {
    /// The partial trajectory attached to a solver failure, if any.
    pub fn partial_trajectory(&self) -> Option<&Trajectory> {
        match self {
            Error::Divergence { partial, .. }
            | Error::StepUnderflow { partial, .. }
            | Error::StepBudgetExhausted { partial, .. }
            | Error::DiscreteStep { partial, .. } => Some(partial),
            _ => None,
        }
    }
}
