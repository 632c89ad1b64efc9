//! Solvers for monotone equations `V(z) = 0` driven by a second-order flow
//! with vanishing `alpha/t^r` damping, an operator-derivative damping term,
//! and a time-rescaling multiplier `beta`.
//!
//! The crate ships two solvers over the same operator abstraction:
//!
//! - [`flow::integrate`] advances the continuous system through its
//!   first-order `(u, z)` reformulation with fixed-step RK4 or adaptive
//!   RK45,
//! - [`stepper::run_discrete`] runs the implicit algorithm, where every
//!   step is a resolvent problem `z + gamma V(z) = w` solved either by a
//!   dense factorization (affine operators) or by Newton iteration.
//!
//! Around the solvers sit the pieces needed to audit them: schedule
//! validators for the growth conditions that license the convergence
//! theory ([`schedule`]), Lyapunov-style energy diagnostics
//! ([`flow::energy_continuous`], [`stepper::energy_discrete`]), and rate
//! fitting over trajectories ([`diagnostics`]).
//!
//! The core is `no_std`-compatible (with `alloc`); IO, run configuration
//! and CSV/JSON emission live in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]
// negated comparisons in the validators reject NaN, which `<=` would
// accept; indexed loops mirror the componentwise math
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod diagnostics;
mod error;
pub mod flow;
pub mod linalg;
pub mod operator;
pub mod params;
pub mod presets;
pub mod schedule;
pub mod stepper;
pub mod trajectory;

pub use error::Error;
pub use operator::{LagrangianProblem, Objective, Operator};
pub use params::SolverParams;
pub use schedule::BetaSchedule;
pub use trajectory::{Sample, Trajectory, TrajectoryKind};
