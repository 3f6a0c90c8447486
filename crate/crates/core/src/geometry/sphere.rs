use std::f64::consts::FRAC_PI_2;

use super::{BackendKind, GeometryBudget, Manifold, Vector};
use crate::error::{Error, Result};

/// The unit sphere `S^n ⊂ R^{n+1}`.
#[derive(Clone, Debug)]
pub struct Sphere {
    dim: usize,
}

impl Sphere {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Manifold for Sphere {
    fn kind(&self) -> BackendKind {
        BackendKind::Sphere
    }

    fn ambient_dim(&self) -> usize {
        self.dim + 1
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn feasibility_tol(&self) -> f64 {
        1e-10
    }

    fn violation(&self, x: &Vector) -> f64 {
        (x.norm() - 1.0).abs()
    }

    fn restore(&self, x: &Vector) -> Result<Vector> {
        let n = x.norm();
        if n < 1e-300 {
            return Err(Error::domain("cannot project the origin onto the sphere"));
        }
        Ok(x / n)
    }

    fn metric(&self, _x: &Vector, u: &Vector, v: &Vector) -> f64 {
        u.dot(v)
    }

    fn to_tangent(&self, x: &Vector, u: &Vector) -> Vector {
        u - x * x.dot(u)
    }

    fn distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        // Chordal form, accurate for both close and nearly antipodal pairs.
        Ok(2.0 * (x - y).norm().atan2((x + y).norm()))
    }

    fn exp(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        let n = v.norm();
        if n == 0.0 {
            return Ok(x.clone());
        }
        let y = x * n.cos() + v * (n.sin() / n);
        Ok(&y / y.norm())
    }

    fn log(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        let d = self.distance(x, y)?;
        let u = y - x * x.dot(y);
        let un = u.norm();
        if un < 1e-300 {
            if d < 1e-12 {
                return Ok(Vector::zeros(x.len()));
            }
            return Err(Error::domain("logarithm of an antipodal pair is not unique"));
        }
        Ok(u * (d / un))
    }

    fn transport(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector> {
        let c = 1.0 + x.dot(y);
        if c < 1e-14 {
            return Err(Error::domain("transport between antipodal points is not unique"));
        }
        Ok(v - (x + y) * (y.dot(v) / c))
    }

    fn default_radius(&self) -> f64 {
        FRAC_PI_2
    }

    fn budget(&self, center: &Vector, radius: f64) -> GeometryBudget {
        // Injectivity radius π and convexity radius π/2 never bind below π/(2√1).
        let rho = FRAC_PI_2;
        GeometryBudget {
            center: center.iter().copied().collect(),
            radius,
            rho,
            curvature_bound: 1.0,
            hessian_bound: 2.0,
            exp_smoothness: rho * rho,
            log_lipschitz: rho / rho.sin(),
            normal_curvature: None,
            estimated: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use crate::geometry::{Ball, Space};

    #[test]
    fn quarter_great_circle() {
        let s = Space::sphere(2);
        let n = s.point([0.0, 0.0, 1.0]).unwrap();
        let e = s.point([1.0, 0.0, 0.0]).unwrap();
        assert!((s.distance(&n, &e).unwrap() - FRAC_PI_2).abs() < 1e-15);
        let v = s.tangent(&n, [FRAC_PI_2, 0.0, 0.0]).unwrap();
        let y = s.exp(&n, &v).unwrap();
        assert!((y.coords() - e.coords()).norm() < 1e-15);
        let l = s.log(&n, &e).unwrap();
        assert!((l.components() - v.components()).norm() < 1e-15);
    }

    #[test]
    fn transported_log_is_negated_reverse_log() {
        let s = Space::sphere(2);
        let x = s.point([0.0, 0.0, 1.0]).unwrap();
        let y = s.point([1.0, 0.0, 0.0]).unwrap();
        let g = s.log(&x, &y).unwrap();
        let moved = s.transport(&x, &y, &g).unwrap();
        let back = s.log(&y, &x).unwrap();
        assert!((moved.components() + back.components()).norm() < 1e-14);
        // Γ_{y,x} points to the north pole: (0, 0, π/2).
        assert!((back.components()[2] - FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn octant_holonomy_is_quarter_turn() {
        // Independent oracle: the octant triangle encloses area π/2, so the
        // holonomy is a rotation by π/2. Compose the three analytic transports
        // N -> E1 -> E2 -> N and compare with the rotated start vector.
        let s = Space::sphere(2);
        let n = s.point([0.0, 0.0, 1.0]).unwrap();
        let e1 = s.point([1.0, 0.0, 0.0]).unwrap();
        let e2 = s.point([0.0, 1.0, 0.0]).unwrap();
        let v = s.tangent(&n, [1.0, 0.0, 0.0]).unwrap();
        let a = s.transport(&n, &e1, &v).unwrap();
        let b = s.transport(&e1, &e2, &a).unwrap();
        let c = s.transport(&e2, &n, &b).unwrap();
        let angle = c.components()[1].atan2(c.components()[0]);
        assert!((angle.abs() - PI / 2.0).abs() < 1e-12, "angle {angle}");
        assert!((s.norm(&c) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn analytic_budget() {
        let s = Space::sphere(2);
        let c = s.point([0.0, 0.0, 1.0]).unwrap();
        let b = s.budget(&Ball::new(c, 0.5)).unwrap();
        assert_eq!(b.rho, FRAC_PI_2);
        assert_eq!(b.curvature_bound, 1.0);
        assert!(!b.estimated);
    }
}
