//! Separation of two discrete solutions started from nearby points.

use serde::Serialize;

use super::{catching_up, Problem, Trajectory};
use crate::error::Result;
use crate::geometry::Point;

/// Separations below this are treated as merged and excluded from the fit.
const MERGED: f64 = 1e-13;

#[derive(Clone, Debug, Serialize)]
pub struct SeparationCurve {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// Least-squares slope of `ln d²` against `t` over the unmerged prefix.
    pub fitted_rate: Option<f64>,
    /// First node at which the two solutions coincide.
    pub merged_at: Option<f64>,
    /// `2‖f‖∞ + max ẋ₁ + max ẋ₂`.
    pub velocity_sum: f64,
}

/// Run the scheme from `problem.x0` and from `other` with the same step and
/// record `d(x₁(tᵢ), x₂(tᵢ))`.
pub fn gronwall_separation(problem: &Problem, other: &Point, h: f64) -> Result<SeparationCurve> {
    let second = problem.with_x0(other.clone())?;
    let (a, b) = rayon::join(|| catching_up(problem, h), || catching_up(&second, h));
    let (a, b) = (a?, b?);
    separation(problem, &a, &b)
}

fn separation(problem: &Problem, a: &Trajectory, b: &Trajectory) -> Result<SeparationCurve> {
    let space = &problem.space;
    let distances = a
        .nodes
        .iter()
        .zip(&b.nodes)
        .map(|(x, y)| space.distance(x, y))
        .collect::<Result<Vec<_>>>()?;
    let merged_idx = distances.iter().position(|&d| d <= MERGED);
    let end = merged_idx.unwrap_or(distances.len());
    let fitted_rate = if end >= 2 {
        let pts: Vec<(f64, f64)> = (0..end).map(|i| (a.times[i], 2.0 * distances[i].ln())).collect();
        Some(slope(&pts))
    } else {
        None
    };
    Ok(SeparationCurve {
        times: a.times.clone(),
        merged_at: merged_idx.map(|i| a.times[i]),
        distances,
        fitted_rate,
        velocity_sum: 2.0 * problem.field.sup_norm + a.stats.max_velocity + b.stats.max_velocity,
    })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x / n, sy + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::Space;
    use crate::sets::{HalfSpace, MovingSet, SetSettings};
    use crate::sweep::Perturbation;

    fn halfline() -> Problem {
        let s = Space::euclidean(1);
        let set = HalfSpace::new(&s, [1.0], 0.0, 1.0).unwrap().with_settings(SetSettings {
            lipschitz: 1.0,
            ..Default::default()
        });
        Problem::new(Arc::new(set), Perturbation::zero(), 1.0, s.point([0.0]).unwrap()).unwrap()
    }

    #[test]
    fn identical_starts_never_separate() {
        let p = halfline();
        let c = gronwall_separation(&p, &p.x0.clone(), 0.01).unwrap();
        assert!(c.distances.iter().all(|&d| d == 0.0));
        assert_eq!(c.merged_at, Some(0.0));
        assert!(c.fitted_rate.is_none());
    }

    #[test]
    fn halfline_solutions_merge_at_first_contact() {
        let p = halfline();
        let other = p.space.point([0.1]).unwrap();
        let c = gronwall_separation(&p, &other, 0.01).unwrap();
        let merged = c.merged_at.unwrap();
        assert!((merged - 0.1).abs() < 1e-9, "{merged}");
        let k = c.times.iter().position(|&t| t == merged).unwrap();
        assert!(c.distances[k..].iter().all(|&d| d <= 1e-13));
    }

    #[test]
    fn linear_flow_separates_at_twice_its_rate() {
        let s = Space::euclidean(2);
        let set = HalfSpace::new(&s, [1.0, 0.0], -100.0, 0.0).unwrap();
        let f = Perturbation::from_fn(|_, x| x.coords() * 0.5, 10.0, 0.5);
        let p = Problem::new(Arc::new(set), f, 1.0, s.point([0.0, 0.0]).unwrap()).unwrap();
        let other = s.point([1e-3, 0.0]).unwrap();
        let c = gronwall_separation(&p, &other, 1e-3).unwrap();
        // Explicit Euler: d_i = (1 + h/2)^i d_0.
        let expected = 2.0 * (1.0f64 + 0.5e-3).ln() / 1e-3;
        assert!((c.fitted_rate.unwrap() - expected).abs() < 1e-9);
    }
}
