//! The catching-up scheme `x_{i+1} = P_{C(t_{i+1})}(exp_{x_i}(h f(t_i, x_i)))`
//! and its piecewise-geodesic interpolant.

mod field;
mod gronwall;
mod residual;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use field::Perturbation;
pub use gronwall::{gronwall_separation, SeparationCurve};
pub use residual::{inclusion_residual, ResidualOptions, ResidualSample};

use crate::error::{Error, Result};
use crate::geometry::{Ball, Point, Space};
use crate::sets::{MovingSet, SetOps};

/// Numerical tolerances shared by integration and certification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Constraint slack accepted for membership.
    pub feasibility: f64,
    /// KKT residual at which the projection solver stops.
    pub projector: f64,
    /// Step length at which the projection solver stops.
    pub projector_step: f64,
    pub projector_max_iter: usize,
    /// Agreement required between multi-start projections.
    pub uniqueness: f64,
    /// Slack on the discrete velocity bound `2‖f‖∞ + K_L`.
    pub velocity_margin: f64,
    /// Inclusion residual above which certification warns.
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-9,
            projector: 1e-9,
            projector_step: 1e-10,
            projector_max_iter: 5000,
            uniqueness: 1e-6,
            velocity_margin: 1e-6,
            residual: 0.05,
        }
    }
}

/// Everything the integrator needs: manifold, moving set, perturbation,
/// horizon and initial point.
#[derive(Clone, Debug)]
pub struct Problem {
    pub space: Space,
    pub set: Arc<dyn MovingSet>,
    pub field: Perturbation,
    pub horizon: f64,
    pub x0: Point,
    pub tolerances: Tolerances,
}

impl Problem {
    pub fn new(set: Arc<dyn MovingSet>, field: Perturbation, horizon: f64, x0: Point) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain("horizon must be finite and positive"));
        }
        let space = set.space().clone();
        if x0.backend() != space.id() {
            return Err(Error::structural("initial point belongs to another backend"));
        }
        if !set.member(0.0, &x0) {
            return Err(Error::structural(format!(
                "initial point violates C(0) by {:e}",
                set.violation(0.0, &x0)
            )));
        }
        Ok(Self {
            space,
            set,
            field,
            horizon,
            x0,
            tolerances: Tolerances::default(),
        })
    }

    pub fn with_x0(&self, x0: Point) -> Result<Self> {
        let mut p = Self::new(self.set.clone(), self.field.clone(), self.horizon, x0)?;
        p.tolerances = self.tolerances;
        Ok(p)
    }

    /// `2‖f‖∞ + K_L`.
    pub fn velocity_bound(&self) -> f64 {
        2.0 * self.field.sup_norm + self.set.settings().lipschitz
    }
}

/// Largest step and sub-horizon allowed by the construction of discrete
/// solutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepBudget {
    pub rho: f64,
    /// `h‖f‖∞ ≤ ρ/2`, or the ceiling when `f = 0`.
    pub h_max: f64,
    /// Largest `T̄` with `(2‖f‖∞ + K_L) T̄ < min(η/2, ℓ)`.
    pub sub_horizon: f64,
    pub sub_horizons: usize,
    pub ceiling: f64,
}

/// Admissible step using the declared `η` and `ℓ` of the problem's set.
pub fn admissible_step(problem: &Problem) -> Result<StepBudget> {
    let s = problem.set.settings();
    admissible_step_with(problem, s.prox_radius, s.uniqueness_radius())
}

/// Admissible step with explicit (for instance empirical) `η` and `ℓ`.
pub fn admissible_step_with(problem: &Problem, eta: f64, ell: f64) -> Result<StepBudget> {
    let f = problem.field.sup_norm;
    let kl = problem.set.settings().lipschitz;
    let reach = (problem.velocity_bound() * problem.horizon).max(1e-3);
    let budget = problem.space.budget(&Ball::new(problem.x0.clone(), reach))?;
    let ceiling = problem.horizon;
    let h_max = if f > 0.0 {
        (budget.rho / (2.0 * f)).min(ceiling)
    } else {
        ceiling
    };
    let rate = 2.0 * f + kl;
    let sub_horizon = if rate > 0.0 {
        (0.5 * eta).min(ell) / rate * (1.0 - 1e-9)
    } else {
        ceiling
    }
    .min(ceiling);
    Ok(StepBudget {
        rho: budget.rho,
        h_max,
        sub_horizon,
        sub_horizons: (problem.horizon / sub_horizon - 1e-9).ceil().max(1.0) as usize,
        ceiling,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub steps: usize,
    pub projection_iterations: usize,
    /// Steps whose drift point left the set.
    pub active_steps: usize,
    pub max_query_distance: f64,
    pub max_velocity: f64,
    pub velocity_bound: f64,
    pub velocity_bound_ok: bool,
    /// Projections that were non-unique or queried beyond `ℓ`.
    pub flagged_steps: usize,
    pub certified: bool,
    pub rho: f64,
    pub admissible_step: f64,
    pub step_admissible: bool,
    pub sub_horizon: f64,
    pub sub_horizons: usize,
    pub field_bound_exceedances: usize,
}

/// Nodes of a catching-up run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    space: Space,
    pub times: Vec<f64>,
    pub nodes: Vec<Point>,
    /// `d(x_{i-1}, x_i) / (t_i - t_{i-1})` at node `i`; zero at node 0.
    pub velocities: Vec<f64>,
    /// Distance from the drift point `exp_{x_{i-1}}(h f)` to `C(t_i)`.
    pub query_distances: Vec<f64>,
    pub active_sets: Vec<Vec<usize>>,
    pub step: f64,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Index `i` with `t ∈ [t_i, t_{i+1}]`.
    pub(crate) fn segment(&self, t: f64) -> usize {
        let n = self.times.len();
        match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => i.min(n.saturating_sub(2)),
            Err(i) => i.saturating_sub(1).min(n.saturating_sub(2)),
        }
    }
}

/// A failed run: the error, the step at which it happened and the nodes
/// computed so far.
#[derive(Debug)]
pub struct SweepError {
    pub step: usize,
    pub partial: Box<Trajectory>,
    pub source: Error,
}

impl fmt::Display for SweepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "catching-up step {} failed: {}", self.step, self.source)
    }
}

impl std::error::Error for SweepError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<SweepError> for Error {
    fn from(e: SweepError) -> Self {
        e.source
    }
}

/// Run the catching-up scheme with step `h` over the problem horizon. The
/// last step is shortened to land on the horizon.
pub fn catching_up(problem: &Problem, h: f64) -> Result<Trajectory, SweepError> {
    let space = &problem.space;
    let set = &problem.set;
    let mut traj = Trajectory {
        space: space.clone(),
        times: vec![0.0],
        nodes: vec![problem.x0.clone()],
        velocities: vec![0.0],
        query_distances: vec![0.0],
        active_sets: vec![set.active_set(0.0, &problem.x0)],
        step: h,
        stats: SolverStats {
            velocity_bound: problem.velocity_bound(),
            velocity_bound_ok: true,
            certified: true,
            ..SolverStats::default()
        },
    };
    let fail = |traj: Trajectory, step: usize, source: Error| SweepError {
        step,
        partial: Box::new(traj),
        source,
    };
    if !(h.is_finite() && h > 0.0) {
        return Err(fail(traj, 0, Error::domain("step must be finite and positive")));
    }
    match admissible_step(problem) {
        Ok(b) => {
            traj.stats.rho = b.rho;
            traj.stats.admissible_step = b.h_max;
            traj.stats.step_admissible = h <= b.h_max * (1.0 + 1e-12);
            traj.stats.sub_horizon = b.sub_horizon;
            traj.stats.sub_horizons = b.sub_horizons;
            if !traj.stats.step_admissible {
                log::warn!("step {h} exceeds the admissible step {}", b.h_max);
            }
        }
        Err(e) => return Err(fail(traj, 0, e)),
    }
    let ell = set.settings().uniqueness_radius();
    let n = (problem.horizon / h - 1e-9).ceil().max(1.0) as usize;
    let mut x = problem.x0.clone();
    for i in 0..n {
        let t = traj.times[i];
        let t_next = if i + 1 == n {
            problem.horizon
        } else {
            (i + 1) as f64 * h
        };
        let dt = t_next - t;
        let drift = problem.field.eval(space, t, &x).scaled(dt);
        let z = match space.exp(&x, &drift) {
            Ok(z) => z,
            Err(e) => return Err(fail(traj, i + 1, e)),
        };
        let proj = match set.project(t_next, &z) {
            Ok(p) => p,
            Err(e) => return Err(fail(traj, i + 1, e)),
        };
        let stats = &mut traj.stats;
        stats.steps += 1;
        stats.projection_iterations += proj.iterations;
        if proj.dist > 0.0 {
            stats.active_steps += 1;
        }
        stats.max_query_distance = stats.max_query_distance.max(proj.dist);
        if proj.flagged || proj.dist > ell {
            stats.flagged_steps += 1;
            if stats.certified {
                log::warn!(
                    "step {} projects from distance {} (uniqueness radius {ell}); run is not certified",
                    i + 1,
                    proj.dist
                );
            }
            stats.certified = false;
        }
        let moved = match space.distance(&x, &proj.point) {
            Ok(d) => d,
            Err(e) => return Err(fail(traj, i + 1, e)),
        };
        let v = moved / dt;
        stats.max_velocity = stats.max_velocity.max(v);
        if v > stats.velocity_bound + problem.tolerances.velocity_margin && stats.velocity_bound_ok {
            log::warn!(
                "discrete velocity {v} exceeds 2|f| + K_L = {} at step {}",
                stats.velocity_bound,
                i + 1
            );
            stats.velocity_bound_ok = false;
        }
        x = proj.point;
        traj.times.push(t_next);
        traj.nodes.push(x.clone());
        traj.velocities.push(v);
        traj.query_distances.push(proj.dist);
        traj.active_sets.push(proj.active_set);
    }
    traj.stats.field_bound_exceedances = problem.field.exceedances();
    Ok(traj)
}

/// The piecewise-geodesic interpolant at time `t`.
pub fn interpolate(traj: &Trajectory, t: f64) -> Result<Point> {
    let horizon = traj.horizon();
    let slack = 1e-12 * horizon.max(1.0);
    if !(t >= -slack && t <= horizon + slack) || traj.nodes.is_empty() {
        return Err(Error::domain(format!("time {t} is outside [0, {horizon}]")));
    }
    if traj.nodes.len() == 1 {
        return Ok(traj.nodes[0].clone());
    }
    let t = t.clamp(0.0, horizon);
    let i = traj.segment(t);
    let (t0, t1) = (traj.times[i], traj.times[i + 1]);
    let s = (t - t0) / (t1 - t0);
    if s <= 0.0 {
        return Ok(traj.nodes[i].clone());
    }
    if s >= 1.0 {
        return Ok(traj.nodes[i + 1].clone());
    }
    let space = &traj.space;
    let g = space.log_within(&traj.nodes[i], &traj.nodes[i + 1], f64::INFINITY)?;
    space.exp_within(&traj.nodes[i], &g.scaled(s), f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{Ball as BallSet, HalfSpace};

    fn halfline(x0: f64) -> Problem {
        let s = Space::euclidean(1);
        let set = HalfSpace::new(&s, [1.0], 0.0, 1.0)
            .unwrap()
            .with_settings(crate::sets::SetSettings {
                lipschitz: 1.0,
                ..Default::default()
            });
        Problem::new(Arc::new(set), Perturbation::zero(), 1.0, s.point([x0]).unwrap()).unwrap()
    }

    #[test]
    fn halfline_nodes_follow_time() {
        let p = halfline(0.0);
        let tr = catching_up(&p, 1e-3).unwrap();
        assert_eq!(tr.len(), 1001);
        for (t, x) in tr.times.iter().zip(&tr.nodes) {
            assert!((x.coords()[0] - t).abs() < 1e-12);
        }
        assert!(tr.stats.velocity_bound_ok);
        assert!((tr.stats.max_velocity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shortened_last_step_lands_on_horizon() {
        let p = halfline(0.0);
        let tr = catching_up(&p, 0.3).unwrap();
        assert_eq!(tr.times, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    #[test]
    fn admissible_step_examples() {
        let p = halfline(0.0);
        let b = admissible_step(&p).unwrap();
        assert_eq!(b.h_max, p.horizon);
        let s = Space::sphere(2);
        let set = BallSet::new(&s, s.point([0.0, 0.0, 1.0]).unwrap(), 1.0, None)
            .unwrap()
            .with_settings(crate::sets::SetSettings {
                lipschitz: 2.0,
                prox_radius: 0.1,
                ..Default::default()
            });
        let f = Perturbation::from_fn(|_, _| crate::geometry::Vector::zeros(3), 1.0, 0.0);
        let p = Problem::new(Arc::new(set), f, 1.0, s.point([0.0, 0.0, 1.0]).unwrap()).unwrap();
        let b = admissible_step(&p).unwrap();
        assert!((b.h_max - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        // (2|f| + K_L) T̄ < η / 2 with |f| = 1, K_L = 2, η = 0.1.
        assert!(b.sub_horizon < 0.0125 && b.sub_horizon > 0.0125 * (1.0 - 1e-8));
    }

    #[test]
    fn interpolant_hits_nodes_and_is_linear_in_flat_space() {
        let p = halfline(0.0);
        let tr = catching_up(&p, 0.25).unwrap();
        assert_eq!(interpolate(&tr, 0.5).unwrap(), tr.nodes[2]);
        assert!((interpolate(&tr, 0.6).unwrap().coords()[0] - 0.6).abs() < 1e-15);
        assert!(interpolate(&tr, 1.5).is_err());
    }

    #[test]
    fn sphere_midpoint_is_slerp() {
        let s = Space::sphere(2);
        let a = s.point([1.0, 0.0, 0.0]).unwrap();
        let b = s.point([0.0, 0.6, 0.8]).unwrap();
        let tr = Trajectory {
            space: s.clone(),
            times: vec![0.0, 1.0],
            nodes: vec![a, b],
            velocities: vec![0.0, std::f64::consts::FRAC_PI_2],
            query_distances: vec![0.0; 2],
            active_sets: vec![vec![]; 2],
            step: 1.0,
            stats: SolverStats::default(),
        };
        let m = interpolate(&tr, 0.5).unwrap();
        // slerp(a, b, 1/2) = (a + b) / (2 cos(θ/2)) with θ = π/2.
        let k = 1.0 / (2.0 * std::f64::consts::FRAC_PI_4.cos());
        for (got, want) in m.coords().iter().zip([k, 0.6 * k, 0.8 * k]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let s = Space::euclidean(1);
        let set = HalfSpace::new(&s, [1.0], 0.5, 0.0).unwrap();
        let r = Problem::new(Arc::new(set), Perturbation::zero(), 1.0, s.point([0.0]).unwrap());
        assert!(matches!(r, Err(Error::Structural(_))));
    }
}
