//! Riemannian projected-gradient projection onto inequality-defined sets.
//!
//! Each iteration takes a geodesic step along `-∇ d²(y, ·) = 2 Γ_{c,y}`,
//! restores feasibility with minimum-norm Gauss–Newton steps on violated
//! constraints, and accepts by Armijo backtracking along the projection arc.
//! The KKT residual is the norm of the gradient projected onto the
//! linearized feasible cone.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{MovingSet, ProjectionResult, SetOps, ACTIVITY_TOL};
use crate::error::{Error, Result};
use crate::geometry::{Point, Space, Tangent};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient is this small.
    pub kkt_tol: f64,
    /// Stop when an accepted step moves less than this.
    pub step_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            kkt_tol: 1e-9,
            step_tol: 1e-10,
        }
    }
}

const ARMIJO: f64 = 1e-4;
const RESTORE_TOL: f64 = 1e-13;
const RESTORE_MAX_ITER: usize = 100;
const MAX_BRUTE_FORCE: usize = 12;
const CROSSING_ITER: usize = 60;
/// Largest multiple of `2 Γ_{c,y}` tried as a step; values above one speed
/// up sliding along flat stretches of the boundary.
const ALPHA_MAX: f64 = 1024.0;
/// Relative decrease of `d²` that is indistinguishable from rounding.
const NOISE_FLOOR: f64 = 8.0 * f64::EPSILON;
/// KKT residual accepted when no further decrease can be measured.
const STALL_RESIDUAL: f64 = 1e-6;

pub(crate) fn project<S: MovingSet + ?Sized>(set: &S, t: f64, y: &Point, init: &Point) -> Result<ProjectionResult> {
    let space = set.space();
    if set.member(t, y) {
        return Ok(ProjectionResult {
            point: y.clone(),
            dist: 0.0,
            active_set: set.active_set(t, y),
            iterations: 0,
            converged: true,
            flagged: false,
        });
    }
    let opts = set.settings().solver;
    let radius = space.default_radius();
    let mut c = restore(set, t, init).map_err(|e| {
        Error::structural(format!(
            "no member of C({t}) found near the query ({e}); the set may be empty"
        ))
    })?;
    let mut phi = space.distance(y, &c)?.powi(2);
    let mut alpha = 0.5;
    let mut residual = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        let u = space.log_within(&c, y, f64::INFINITY)?.scaled(2.0);
        let d = cone_projection(set, t, &c, &u)?;
        residual = space.norm(&d);
        if residual <= opts.kkt_tol {
            return Ok(finish(set, t, y, c, iter, true));
        }
        let directions = if space.norm(&u.checked_sub(&d)?) > 1e-12 * space.norm(&u) {
            vec![u.clone(), d]
        } else {
            vec![u.clone()]
        };
        let mut accepted: Option<(Point, f64, f64)> = None;
        while alpha >= 1e-14 {
            for dir in &directions {
                let mut step = dir.scaled(alpha);
                let len = space.norm(&step);
                if len > 0.5 * radius {
                    step = step.scaled(0.5 * radius / len);
                }
                let Ok(trial) = space.exp(&c, &step).and_then(|p| restore(set, t, &p)) else {
                    continue;
                };
                let phi_trial = space.distance(y, &trial)?.powi(2);
                let moved = space.log_within(&c, &trial, f64::INFINITY)?;
                let predicted = space.inner(&u, &moved)?.max(0.0);
                if phi_trial <= phi - ARMIJO * predicted && accepted.as_ref().is_none_or(|a| phi_trial < a.1) {
                    accepted = Some((trial, phi_trial, space.norm(&moved)));
                }
            }
            if accepted.is_some() {
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, phi_next, moved)) = accepted else {
            // Backtracking exhausted: no descent is possible at this precision.
            return if residual <= STALL_RESIDUAL {
                Ok(finish(set, t, y, c, iter, true))
            } else {
                Err(Error::ProjectionNotConverged {
                    best: Box::new(c),
                    residual,
                    iterations: iter,
                })
            };
        };
        let gain = phi - phi_next;
        c = next;
        phi = phi_next;
        if gain <= NOISE_FLOOR * phi && residual <= STALL_RESIDUAL {
            return Ok(finish(set, t, y, c, iter, true));
        }
        // A tiny move only certifies stationarity when the trial step was not
        // itself tiny.
        if moved <= opts.step_tol && alpha >= 1e-3 {
            return Ok(finish(set, t, y, c, iter, true));
        }
        alpha = (alpha * 2.0).min(ALPHA_MAX);
    }
    Err(Error::ProjectionNotConverged {
        best: Box::new(c),
        residual,
        iterations: opts.max_iter,
    })
}

fn finish<S: MovingSet + ?Sized>(
    set: &S,
    t: f64,
    y: &Point,
    c: Point,
    iterations: usize,
    converged: bool,
) -> ProjectionResult {
    let dist = set.space().distance(y, &c).unwrap_or(f64::NAN);
    ProjectionResult {
        active_set: set.active_set(t, &c),
        point: c,
        dist,
        iterations,
        converged,
        flagged: false,
    }
}

/// Projection of `u` onto `{d : ⟨∇g_i, d⟩ ≥ 0 for active i}`, written as
/// `u + Σ μ_i ∇g_i` with `μ ≥ 0` from a non-negative least-squares solve.
/// Its norm is the KKT residual.
fn cone_projection<S: MovingSet + ?Sized>(set: &S, t: f64, c: &Point, u: &Tangent) -> Result<Tangent> {
    let space = set.space();
    let values = set.constraint_values(t, c);
    let active: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, g)| **g <= ACTIVITY_TOL)
        .map(|(i, _)| i)
        .collect();
    if active.is_empty() {
        return Ok(u.clone());
    }
    let grads = set.constraint_gradients(t, c)?;
    let a: Vec<&Tangent> = active.iter().map(|&i| &grads[i]).collect();
    let m = a.len();
    let mut gram = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    for i in 0..m {
        b[i] = space.inner(a[i], u)?;
        for j in 0..=i {
            let v = space.inner(a[i], a[j])?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let mu = nnls(&gram, &b)?;
    let mut d = u.clone();
    for (ai, mi) in a.iter().zip(mu.iter()) {
        if *mi > 0.0 {
            d = d.checked_add(&ai.scaled(*mi))?;
        }
    }
    Ok(d)
}

/// Minimize `½|u + Aμ|²` over `μ ≥ 0` given `G = AᵀA` and `b = Aᵀu`.
fn nnls(gram: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let m = b.len();
    if m > MAX_BRUTE_FORCE {
        return Err(Error::numeric(
            format!("{m} simultaneously active constraints exceed the solver limit"),
            0.0,
        ));
    }
    let objective = |mu: &DVector<f64>| 2.0 * mu.dot(b) + mu.dot(&(gram * mu));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let mut mu = DVector::zeros(m);
        if !idx.is_empty() {
            let k = idx.len();
            let sub = DMatrix::from_fn(k, k, |r, c| gram[(idx[r], idx[c])]);
            let rhs = DVector::from_fn(k, |r, _| -b[idx[r]]);
            let Ok(sol) = sub.pseudo_inverse(1e-12).map(|p| p * rhs) else {
                continue;
            };
            if sol.iter().any(|v| *v < 0.0) {
                continue;
            }
            for (r, &i) in idx.iter().enumerate() {
                mu[i] = sol[r];
            }
        }
        let grad = gram * &mu + b;
        let kkt = (0..m).all(|i| mu[i] > 0.0 || grad[i] >= -1e-12 * (1.0 + b.amax()));
        let f = objective(&mu);
        if kkt {
            return Ok(mu);
        }
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, mu));
        }
    }
    Ok(best.map(|(_, mu)| mu).unwrap_or_else(|| DVector::zeros(m)))
}

/// Gauss–Newton feasibility restoration: minimum-norm tangent steps that
/// zero the linearized violated constraints.
pub(crate) fn restore<S: MovingSet + ?Sized>(set: &S, t: f64, x: &Point) -> Result<Point> {
    let space: &Space = set.space();
    let mut x = x.clone();
    let mut worst = 0.0;
    for _ in 0..RESTORE_MAX_ITER {
        let g = set.constraint_values(t, &x);
        let violated: Vec<usize> = (0..g.len()).filter(|&i| g[i] < -RESTORE_TOL).collect();
        if violated.is_empty() {
            return Ok(x);
        }
        worst = violated.iter().map(|&i| -g[i]).fold(0.0, f64::max);
        let grads = set.constraint_gradients(t, &x)?;
        let k = violated.len();
        let gram = DMatrix::from_fn(k, k, |r, c| {
            space.inner(&grads[violated[r]], &grads[violated[c]]).unwrap_or(0.0)
        });
        let rhs = DVector::from_fn(k, |r, _| -g[violated[r]]);
        let lambda = gram
            .pseudo_inverse(1e-14)
            .map(|p| p * rhs)
            .map_err(|e| Error::numeric(format!("restoration failed: {e}"), worst))?;
        let mut step = space.zero(&x);
        for (r, &i) in violated.iter().enumerate() {
            step = step.checked_add(&grads[i].scaled(lambda[r]))?;
        }
        let len = space.norm(&step);
        if !len.is_finite() || len == 0.0 {
            break;
        }
        let radius = 0.5 * space.default_radius();
        if len > radius {
            step = step.scaled(radius / len);
        }
        x = first_crossing(set, t, &x, &step, &violated)?;
    }
    Err(Error::numeric("feasibility restoration did not converge", worst))
}

/// Move along `exp_x(s δ)` to the first `s ∈ (0, 1]` where the previously
/// violated constraints are all satisfied. A full Gauss–Newton step
/// overshoots curved boundaries, so the crossing is bracketed and refined by
/// Illinois regula falsi, keeping the feasible end of the bracket.
fn first_crossing<S: MovingSet + ?Sized>(
    set: &S,
    t: f64,
    x: &Point,
    step: &Tangent,
    violated: &[usize],
) -> Result<Point> {
    let space = set.space();
    let worst = |p: &Point| {
        let g = set.constraint_values(t, p);
        violated.iter().map(|&i| g[i]).fold(f64::INFINITY, f64::min)
    };
    let full = space.exp(x, step)?;
    let (mut a, mut fa) = (0.0, worst(x));
    let (mut b, mut fb) = (1.0, worst(&full));
    if fb <= RESTORE_TOL {
        return Ok(full);
    }
    let tol = RESTORE_TOL.max(1e-14 * fa.abs());
    let mut best = full;
    let mut side = 0i8;
    for _ in 0..CROSSING_ITER {
        let s = b - fb * (b - a) / (fb - fa);
        let p = space.exp(x, &step.scaled(s))?;
        let f = worst(&p);
        if f >= 0.0 {
            b = s;
            fb = f;
            best = p;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = s;
            fa = f;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if fb <= tol || b - a <= 1e-15 {
            break;
        }
    }
    Ok(best)
}
