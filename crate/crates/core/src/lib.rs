//! Bregman ADMM for large constrained assignment problems.
//!
//! Items are assigned to owners under per-owner inequality and equality
//! constraints and a per-item simplex. The solver splits the problem into
//! per-item quadratic programs over the probability simplex that run in
//! parallel against a shared snapshot, followed by cheap owner-side slack and
//! multiplier updates.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` case.

pub mod admm;
pub mod checksum;
pub mod engine;
pub mod eval;
pub mod objective;
pub mod problem;
pub mod rounding;
pub mod scalar;
pub mod subsolver;

pub use admm::{solve, solve_with, ConvergenceTrace, IterationState, Solution, SolverConfig, Tolerances, TraceRow};
pub use engine::{Engine, EngineConfig};
pub use eval::{evaluate, oracle_solve, SolutionReport};
pub use objective::{Objective, ObjectiveKind, ObjectiveModel};
pub use problem::{partition, validate, Integrality, Partition, ProblemError, ProblemSpec};
pub use rounding::{round_solution, BinaryAssignment};
pub use scalar::Scalar;

pub type Spec64 = ProblemSpec<f64>;
pub type Spec32 = ProblemSpec<f32>;
pub type Model64 = ObjectiveModel<f64>;
pub type Model32 = ObjectiveModel<f32>;
pub type State64 = IterationState<f64>;
pub type State32 = IterationState<f32>;
pub type Solution64 = Solution<f64>;
pub type Solution32 = Solution<f32>;
