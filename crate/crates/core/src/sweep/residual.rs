//! Residual of the discrete normal-cone inclusion.

use rand::Rng;
use serde::Serialize;

use super::{Problem, Trajectory};
use crate::error::{Error, Result};
use crate::proxreg::stream;
use crate::sets::SetOps;

#[derive(Clone, Debug)]
pub struct ResidualOptions {
    /// Hypomonotonicity constant `Ê` used in the comparison term.
    pub e_hat: f64,
    pub samples: usize,
    /// Largest distance of sampled members; defaults to `min(η/4, ρ/10)`.
    pub max_radius: Option<f64>,
    /// Smallest sampled distance as a fraction of the largest.
    pub min_fraction: f64,
    pub seed: u64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self {
            e_hat: 0.0,
            samples: 400,
            max_radius: None,
            min_fraction: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualSample {
    pub t: f64,
    /// Index of the node at which `w` is evaluated.
    pub node: usize,
    pub residual: f64,
    pub w_norm: f64,
    /// Members of the set that entered the supremum.
    pub members: usize,
    /// Set when no nearby member could be sampled.
    pub inconclusive: bool,
}

/// Residual of `w = -ẋ + f ∈ N(C(t), x)` at the right node of the step that
/// contains `t`, where `ẋ` is the backward difference transported to that node:
/// `max(0, sup_c ⟨w, log_x c⟩ - Ê |w| d(x, c)²)` over sampled `c ∈ C(t_{i+1})`.
pub fn inclusion_residual(
    problem: &Problem,
    traj: &Trajectory,
    t: f64,
    opts: &ResidualOptions,
) -> Result<ResidualSample> {
    if traj.len() < 2 {
        return Err(Error::domain("trajectory has no steps"));
    }
    let horizon = traj.horizon();
    if !(t > 0.0 && t <= horizon) {
        return Err(Error::domain(format!("time {t} is outside (0, {horizon}]")));
    }
    let i = traj.segment(t);
    let space = &problem.space;
    let (x_prev, x) = (&traj.nodes[i], &traj.nodes[i + 1]);
    let t1 = traj.times[i + 1];
    let dt = t1 - traj.times[i];
    let back = space.log_within(x, x_prev, f64::INFINITY)?.scaled(1.0 / dt);
    let w = back.checked_add(&problem.field.eval(space, t1, x))?;
    let w_norm = space.norm(&w);

    let rho = traj.stats.rho;
    let r_max = opts
        .max_radius
        .unwrap_or_else(|| (0.25 * problem.set.settings().prox_radius).min(0.1 * rho));
    let r_min = r_max * opts.min_fraction;
    let ln_span = (r_max / r_min).ln();
    let mut rng = stream(opts.seed, (i + 1) as u64);
    let mut best = f64::NEG_INFINITY;
    let mut members = 0;
    for _ in 0..opts.samples {
        let d = r_min * (rng.random::<f64>() * ln_span).exp();
        let u = space.random_unit_tangent(x, &mut rng);
        let y = match space.exp_within(x, &u.scaled(d), f64::INFINITY) {
            Ok(y) => y,
            Err(_) => continue,
        };
        let c = if problem.set.member(t1, &y) {
            y
        } else {
            match problem.set.project(t1, &y) {
                Ok(p) if p.converged => p.point,
                _ => continue,
            }
        };
        let g = match space.log_within(x, &c, f64::INFINITY) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let dc = space.norm(&g);
        if dc == 0.0 || dc > 2.0 * r_max {
            continue;
        }
        members += 1;
        let value = space.inner(&w, &g)? - opts.e_hat * w_norm * dc * dc;
        best = best.max(value);
    }
    Ok(ResidualSample {
        t,
        node: i + 1,
        residual: best.max(0.0),
        w_norm,
        members,
        inconclusive: members == 0,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::{Space, Vector};
    use crate::sets::{HalfSpace, MovingSet, SetSettings};
    use crate::sweep::{catching_up, Perturbation};

    #[test]
    fn sliding_halfline_has_zero_residual() {
        let s = Space::euclidean(1);
        let set = HalfSpace::new(&s, [1.0], 0.0, 1.0).unwrap().with_settings(SetSettings {
            lipschitz: 1.0,
            ..Default::default()
        });
        let p = Problem::new(Arc::new(set), Perturbation::zero(), 1.0, s.point([0.0]).unwrap()).unwrap();
        let tr = catching_up(&p, 0.01).unwrap();
        let r = inclusion_residual(&p, &tr, 0.505, &ResidualOptions::default()).unwrap();
        assert!(!r.inconclusive);
        assert!((r.w_norm - 1.0).abs() < 1e-9);
        assert!(r.residual <= 1e-12, "{}", r.residual);
    }

    #[test]
    fn free_translation_has_zero_residual() {
        let s = Space::euclidean(2);
        let set = HalfSpace::new(&s, [1.0, 0.0], -10.0, 0.0).unwrap();
        let f = Perturbation::from_fn(|_, _| Vector::from_vec(vec![0.3, -0.2]), 0.4, 0.0);
        let p = Problem::new(Arc::new(set), f, 1.0, s.point([0.0, 0.0]).unwrap()).unwrap();
        let tr = catching_up(&p, 0.1).unwrap();
        let r = inclusion_residual(&p, &tr, 0.55, &ResidualOptions::default()).unwrap();
        assert!(r.w_norm < 1e-12);
        assert!(r.residual < 1e-12);
    }
}
