//! Simulation of perturbed sweeping processes on Riemannian manifolds.

pub mod error;
pub mod expr;
pub mod geometry;
pub mod lab;
pub mod proxreg;
pub mod scenario;
pub mod sets;
pub mod sweep;

pub use error::{Error, Result};
pub use geometry::{BackendKind, Ball, GeometryBudget, Manifold, Point, Space, Tangent, Vector};
pub use scenario::{Scenario, ScenarioSpec};
pub use sets::{MovingSet, ProjectionResult, SetOps, SetSettings};
pub use sweep::{
    admissible_step, catching_up, gronwall_separation, inclusion_residual, interpolate, Perturbation, Problem,
    SolverStats, StepBudget, SweepError, Tolerances, Trajectory,
};
