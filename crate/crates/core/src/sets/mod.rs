//! Time-indexed constraint sets `C(t) = {x : g_i(t, x) ≥ 0}` on a manifold.
//!
//! [`MovingSet`] is the small interface a set implements: constraint values,
//! their Riemannian gradients and, when known, a closed-form projection.
//! Membership, distance, projection and normal-cone generators come from the
//! blanket [`SetOps`] extension.

mod catalog;
mod inequality;
mod solver;

use std::fmt;

use serde::Serialize;

pub use catalog::{Ball, BallComplement, HalfSpace, SphereCap};
pub use inequality::Inequalities;
pub use solver::SolverOptions;

use crate::error::{Error, Result};
use crate::geometry::{Point, Space, Tangent};

/// Constraints with `|g_i| ≤ ACTIVITY_TOL` are reported as active.
pub const ACTIVITY_TOL: f64 = 1e-7;

/// Declared constants and numerical settings of a moving set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SetSettings {
    /// Hausdorff-Lipschitz modulus `K_L` of `t ↦ C(t)`.
    pub lipschitz: f64,
    /// Declared prox-regularity radius `η`.
    pub prox_radius: f64,
    /// Declared uniqueness radius `ℓ`; `η` is used when absent.
    pub uniqueness_radius: Option<f64>,
    /// `x ∈ C(t)` iff every `g_i(t, x) ≥ -member_tol`.
    pub member_tol: f64,
    pub solver: SolverOptions,
}

impl Default for SetSettings {
    fn default() -> Self {
        Self {
            lipschitz: 0.0,
            prox_radius: 1.0,
            uniqueness_radius: None,
            member_tol: 1e-9,
            solver: SolverOptions::default(),
        }
    }
}

impl SetSettings {
    pub fn uniqueness_radius(&self) -> f64 {
        self.uniqueness_radius.unwrap_or(self.prox_radius)
    }
}

/// Outcome of a metric projection onto `C(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub point: Point,
    pub dist: f64,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// The nearest point is not unique or the query lies outside the
    /// validated region; the returned point is one local minimizer.
    pub flagged: bool,
}

pub trait MovingSet: fmt::Debug + Send + Sync {
    fn space(&self) -> &Space;
    fn settings(&self) -> &SetSettings;
    fn settings_mut(&mut self) -> &mut SetSettings;
    fn constraint_count(&self) -> usize;
    /// Signed constraint values; `g_i ≥ 0` inside.
    fn constraint_values(&self, t: f64, x: &Point) -> Vec<f64>;
    /// Riemannian gradients of the constraints at `x`.
    fn constraint_gradients(&self, t: f64, x: &Point) -> Result<Vec<Tangent>>;
    fn closed_form_projection(&self, _t: f64, _y: &Point) -> Option<Result<ProjectionResult>> {
        None
    }
    /// Exact Hausdorff-Lipschitz modulus when it is known in closed form.
    fn analytic_lipschitz(&self) -> Option<f64> {
        None
    }
    fn describe(&self) -> String;

    fn with_settings(mut self, settings: SetSettings) -> Self
    where
        Self: Sized,
    {
        *self.settings_mut() = settings;
        self
    }
}

/// Operations shared by every [`MovingSet`].
pub trait SetOps: MovingSet {
    fn member(&self, t: f64, x: &Point) -> bool {
        let tol = self.settings().member_tol;
        self.constraint_values(t, x).iter().all(|g| *g >= -tol)
    }

    /// Largest constraint violation `max(0, -min g_i)`.
    fn violation(&self, t: f64, x: &Point) -> f64 {
        self.constraint_values(t, x).into_iter().fold(0.0, |acc, g| acc.max(-g))
    }

    fn active_set(&self, t: f64, x: &Point) -> Vec<usize> {
        active_indices(&self.constraint_values(t, x))
    }

    fn project(&self, t: f64, y: &Point) -> Result<ProjectionResult> {
        if let Some(result) = self.closed_form_projection(t, y) {
            return result;
        }
        self.project_from(t, y, y)
    }

    /// Run the iterative solver from a chosen starting point.
    fn project_from(&self, t: f64, y: &Point, init: &Point) -> Result<ProjectionResult> {
        solver::project(self, t, y, init)
    }

    fn dist_to_set(&self, t: f64, y: &Point) -> Result<f64> {
        if self.member(t, y) {
            return Ok(0.0);
        }
        Ok(self.project(t, y)?.dist)
    }

    /// Negative gradients of the active constraints: generators of the
    /// proximal normal cone at a member under constraint qualification.
    fn proximal_normal_generators(&self, t: f64, x: &Point) -> Result<Vec<Tangent>> {
        let active = self.active_set(t, x);
        if active.is_empty() {
            return Ok(Vec::new());
        }
        let grads = self.constraint_gradients(t, x)?;
        let space = self.space();
        active
            .into_iter()
            .map(|i| {
                let g = &grads[i];
                if space.norm(g) < 1e-12 {
                    return Err(Error::numeric(
                        format!("constraint {i} has a vanishing gradient on the boundary"),
                        space.norm(g),
                    ));
                }
                Ok(g.scaled(-1.0))
            })
            .collect()
    }
}

impl<T: MovingSet + ?Sized> SetOps for T {}

pub(crate) fn active_indices(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, g)| g.abs() <= ACTIVITY_TOL)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit_disk() -> Ball {
        let s = Space::euclidean(2);
        let c = s.point([0.0, 0.0]).unwrap();
        Ball::new(&s, c, 1.0, None).unwrap()
    }

    fn upper_hemisphere() -> SphereCap {
        SphereCap::new(&Space::sphere(2), [0.0, 0.0, 1.0], 0.0, 0.0, None).unwrap()
    }

    #[test]
    fn disk_membership_and_distance() {
        let d = unit_disk();
        let s = d.space().clone();
        assert!(d.member(0.0, &s.point([0.5, 0.0]).unwrap()));
        let far = s.point([2.0, 0.0]).unwrap();
        assert!(!d.member(0.0, &far));
        assert!((d.dist_to_set(0.0, &far).unwrap() - 1.0).abs() < 1e-14);
        let p = d.project(0.0, &far).unwrap();
        assert!((p.point.coords()[0] - 1.0).abs() < 1e-14);
        assert_eq!(p.active_set, vec![0]);
    }

    #[test]
    fn disk_generator_is_outward() {
        let d = unit_disk();
        let x = d.space().point([1.0, 0.0]).unwrap();
        let gens = d.proximal_normal_generators(0.0, &x).unwrap();
        assert_eq!(gens.len(), 1);
        let g = gens[0].components();
        assert!(g[0] > 0.0 && g[1].abs() < 1e-14);
        let inner = d.space().point([0.2, 0.1]).unwrap();
        assert!(d.proximal_normal_generators(0.0, &inner).unwrap().is_empty());
    }

    #[test]
    fn hemisphere_boundary_and_projection() {
        let cap = upper_hemisphere();
        let s = cap.space().clone();
        assert!(cap.member(0.0, &s.point([0.0, 1.0, 0.0]).unwrap()));
        let theta: f64 = 0.4;
        let y = s.point([0.0, theta.cos(), -theta.sin()]).unwrap();
        // Oracle: dense sampling of the equator.
        let dense = (0..200_000)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 200_000.0;
                let c = s.point([a.cos(), a.sin(), 0.0]).unwrap();
                s.distance(&y, &c).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        let p = cap.project(0.0, &y).unwrap();
        assert!((p.dist - theta).abs() < 1e-12);
        assert!((p.dist - dense).abs() < 1e-9);
        assert!((p.point.coords()[1] - 1.0).abs() < 1e-12);
        let x = s.point([1.0, 0.0, 0.0]).unwrap();
        let g = cap.proximal_normal_generators(0.0, &x).unwrap();
        assert!((g[0].components()[2] + 1.0).abs() < 1e-14);
        assert!((s.distance(&x, &s.point([0.0, 0.0, 1.0]).unwrap()).unwrap() - FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn generic_solver_matches_closed_form_on_disk() {
        let s = Space::euclidean(2);
        let set = Inequalities::new(&s, &["1 - x1^2 - x2^2".to_string()], &Default::default()).unwrap();
        let y = s.point([1.5, -2.0]).unwrap();
        let p = set.project(0.0, &y).unwrap();
        assert!(p.converged);
        assert!((p.dist - 1.5).abs() < 1e-8, "{}", p.dist);
        assert!((p.point.coords()[0] - 0.6).abs() < 1e-7);
        assert!((p.point.coords()[1] + 0.8).abs() < 1e-7);
    }

    #[test]
    fn generic_solver_fixes_members_and_handles_corners() {
        let s = Space::euclidean(2);
        let set = Inequalities::new(&s, &["x1 - t".to_string(), "x2".to_string()], &Default::default()).unwrap();
        let inside = s.point([2.0, 3.0]).unwrap();
        let p = set.project(1.0, &inside).unwrap();
        assert_eq!(p.point, inside);
        assert_eq!(p.dist, 0.0);
        let corner = s.point([-1.0, -2.0]).unwrap();
        let p = set.project(0.5, &corner).unwrap();
        assert!((p.point.coords()[0] - 0.5).abs() < 1e-9);
        assert!(p.point.coords()[1].abs() < 1e-9);
        assert_eq!(p.active_set, vec![0, 1]);
    }

    #[test]
    fn vanishing_gradient_is_diagnosed() {
        let s = Space::euclidean(1);
        let set = Inequalities::new(&s, &["x1^2".to_string()], &Default::default()).unwrap();
        let x = s.point([0.0]).unwrap();
        assert!(matches!(
            set.proximal_normal_generators(0.0, &x),
            Err(Error::Numeric { .. })
        ));
    }
}
