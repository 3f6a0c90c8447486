use std::f64::consts::FRAC_PI_2;

use super::{BackendKind, GeometryBudget, Manifold, Vector};
use crate::error::{Error, Result};

/// Hyperbolic space `H^n` of curvature -1 as the upper sheet of the
/// hyperboloid `{x ∈ R^{n+1} : ⟨x, x⟩_L = -1, x_0 > 0}`.
#[derive(Clone, Debug)]
pub struct Hyperbolic {
    dim: usize,
}

impl Hyperbolic {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// The base point `(1, 0, ..., 0)`.
    pub fn origin(&self) -> Vector {
        let mut o = Vector::zeros(self.dim + 1);
        o[0] = 1.0;
        o
    }
}

/// Minkowski bilinear form with signature (-, +, ..., +).
pub(crate) fn minkowski(u: &Vector, v: &Vector) -> f64 {
    -u[0] * v[0] + u.rows(1, u.len() - 1).dot(&v.rows(1, v.len() - 1))
}

impl Manifold for Hyperbolic {
    fn kind(&self) -> BackendKind {
        BackendKind::Hyperbolic
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
        if x[0] <= 0.0 {
            return f64::INFINITY;
        }
        // Relative to x_0 so that far points are judged on the same scale.
        (minkowski(x, x) + 1.0).abs() / x[0].max(1.0)
    }

    fn restore(&self, x: &Vector) -> Result<Vector> {
        let spatial = x.rows(1, x.len() - 1).into_owned();
        let mut out = Vector::zeros(x.len());
        out[0] = (1.0 + spatial.norm_squared()).sqrt();
        out.rows_mut(1, x.len() - 1).copy_from(&spatial);
        Ok(out)
    }

    fn metric(&self, _x: &Vector, u: &Vector, v: &Vector) -> f64 {
        minkowski(u, v)
    }

    fn to_tangent(&self, x: &Vector, u: &Vector) -> Vector {
        u + x * minkowski(x, u)
    }

    fn riemannian_gradient(&self, x: &Vector, ambient_grad: &Vector) -> Vector {
        let mut g = ambient_grad.clone();
        g[0] = -g[0];
        self.to_tangent(x, &g)
    }

    fn distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        let diff = y - x;
        let chord = minkowski(&diff, &diff).max(0.0).sqrt();
        Ok(2.0 * (chord / 2.0).asinh())
    }

    fn exp(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        let n = minkowski(v, v).max(0.0).sqrt();
        if n == 0.0 {
            return Ok(x.clone());
        }
        let y = x * n.cosh() + v * (n.sinh() / n);
        self.restore(&y)
    }

    fn log(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        let d = self.distance(x, y)?;
        let u = y + x * minkowski(x, y);
        let un = minkowski(&u, &u).max(0.0).sqrt();
        if un < 1e-300 {
            return Ok(Vector::zeros(x.len()));
        }
        Ok(u * (d / un))
    }

    fn transport(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector> {
        let c = 1.0 - minkowski(x, y);
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::numeric("degenerate hyperbolic transport", c));
        }
        Ok(v + (x + y) * (minkowski(y, v) / c))
    }

    fn default_radius(&self) -> f64 {
        // π/(2√|K|) with |K| = 1; injectivity and convexity radii are infinite.
        FRAC_PI_2
    }

    fn budget(&self, center: &Vector, radius: f64) -> GeometryBudget {
        let rho = FRAC_PI_2;
        // Distance of the region's far edge from the hyperboloid vertex.
        let reach = center[0].max(1.0).acosh() + radius + rho;
        GeometryBudget {
            center: center.iter().copied().collect(),
            radius,
            rho,
            curvature_bound: 1.0,
            hessian_bound: 2.0 * rho / rho.tanh(),
            exp_smoothness: rho * rho * std::f64::consts::SQRT_2 * reach.cosh(),
            log_lipschitz: 1.0,
            normal_curvature: None,
            estimated: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::geometry::Space;

    #[test]
    fn geodesic_from_vertex() {
        let s = Space::hyperbolic(2);
        let o = s.point([1.0, 0.0, 0.0]).unwrap();
        let v = s.tangent(&o, [0.0, 1.2, 0.0]).unwrap();
        let y = s.exp(&o, &v).unwrap();
        assert!((y.coords()[0] - 1.2f64.cosh()).abs() < 1e-14);
        assert!((y.coords()[1] - 1.2f64.sinh()).abs() < 1e-14);
        assert!((s.distance(&o, &y).unwrap() - 1.2).abs() < 1e-14);
        let l = s.log(&o, &y).unwrap();
        assert!((l.components() - v.components()).norm() < 1e-13);
    }

    #[test]
    fn transport_is_isometric() {
        let s = Space::hyperbolic(2);
        let o = s.point([1.0, 0.0, 0.0]).unwrap();
        let y = s.exp(&o, &s.tangent(&o, [0.0, 0.7, -0.4]).unwrap()).unwrap();
        let v = s.tangent(&o, [0.0, 0.3, 1.1]).unwrap();
        let w = s.transport(&o, &y, &v).unwrap();
        assert!((s.norm(&w) - s.norm(&v)).abs() < 1e-13);
    }
}
