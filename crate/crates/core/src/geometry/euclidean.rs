use super::{BackendKind, GeometryBudget, Manifold, Vector};
use crate::error::Result;

/// Default cap on the working radius of flat space.
pub const DEFAULT_CEILING: f64 = 1e6;

/// Flat `R^n`.
#[derive(Clone, Debug)]
pub struct Euclidean {
    dim: usize,
    ceiling: f64,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ceiling: DEFAULT_CEILING,
        }
    }

    /// Override the working-radius ceiling (flat space has no natural one).
    pub fn with_ceiling(mut self, ceiling: f64) -> Self {
        self.ceiling = ceiling;
        self
    }
}

impl Manifold for Euclidean {
    fn kind(&self) -> BackendKind {
        BackendKind::Euclidean
    }

    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn feasibility_tol(&self) -> f64 {
        1e-10
    }

    fn violation(&self, _x: &Vector) -> f64 {
        0.0
    }

    fn restore(&self, x: &Vector) -> Result<Vector> {
        Ok(x.clone())
    }

    fn metric(&self, _x: &Vector, u: &Vector, v: &Vector) -> f64 {
        u.dot(v)
    }

    fn to_tangent(&self, _x: &Vector, u: &Vector) -> Vector {
        u.clone()
    }

    fn distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        Ok((y - x).norm())
    }

    fn exp(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        Ok(x + v)
    }

    fn log(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        Ok(y - x)
    }

    fn transport(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Result<Vector> {
        Ok(v.clone())
    }

    fn default_radius(&self) -> f64 {
        self.ceiling
    }

    fn budget(&self, center: &Vector, radius: f64) -> GeometryBudget {
        GeometryBudget {
            center: center.iter().copied().collect(),
            radius,
            rho: self.ceiling,
            curvature_bound: 0.0,
            hessian_bound: 2.0,
            // Straight lines have no acceleration; keep the bound positive.
            exp_smoothness: f64::MIN_POSITIVE,
            log_lipschitz: 1.0,
            normal_curvature: None,
            estimated: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::geometry::{Ball, Space};

    #[test]
    fn pythagorean_distance_and_flat_log() {
        let s = Space::euclidean(2);
        let a = s.point([0.0, 0.0]).unwrap();
        let b = s.point([3.0, 4.0]).unwrap();
        assert_eq!(s.distance(&a, &b).unwrap(), 5.0);
        assert_eq!(s.log(&a, &b).unwrap().components().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn gradient_sign_convention() {
        let s = Space::euclidean(2);
        let x = s.point([0.0, 0.0]).unwrap();
        let y = s.point([1.0, 1.0]).unwrap();
        let g = s.grad_sq_distance(&x, &y).unwrap();
        assert_eq!(g.components().as_slice(), &[-2.0, -2.0]);
        assert!(s.grad_sq_distance(&x, &x).unwrap().is_zero());
    }

    #[test]
    fn flat_transport_is_identity() {
        let s = Space::euclidean(3);
        let x = s.point([0.0, 1.0, 2.0]).unwrap();
        let y = s.point([5.0, -1.0, 0.5]).unwrap();
        let v = s.tangent(&x, [0.3, -0.2, 0.9]).unwrap();
        let w = s.transport(&x, &y, &v).unwrap();
        assert_eq!(w.components(), v.components());
        assert_eq!(w.base(), &y);
    }

    #[test]
    fn budget_uses_ceiling() {
        let s = Space::euclidean(2);
        let c = s.point([0.0, 0.0]).unwrap();
        let b = s.budget(&Ball::new(c, 3.0)).unwrap();
        assert_eq!(b.curvature_bound, 0.0);
        assert_eq!(b.rho, super::DEFAULT_CEILING);
        assert!(b.exp_smoothness > 0.0 && !b.estimated);
    }
}
