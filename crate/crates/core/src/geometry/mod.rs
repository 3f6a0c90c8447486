//! Finite-dimensional Riemannian manifold backends.
//!
//! Every backend works in ambient coordinates: Euclidean space as itself,
//! the unit sphere inside `R^{n+1}`, hyperbolic space as the upper sheet of
//! the hyperboloid in Minkowski space, and implicit submanifolds
//! `{x : g_j(x) = 0}` cut out of `R^n` by equality constraints.
//!
//! Raw operations live on the [`Manifold`] trait. User code goes through
//! [`Space`], which tags points with their backend, carries the base point of
//! every tangent vector, and refuses to mix tangent spaces or to step beyond
//! the backend's working radius.

mod euclidean;
mod hyperbolic;
mod implicit;
pub(crate) mod ode;
mod sphere;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

pub use euclidean::Euclidean;
pub use hyperbolic::Hyperbolic;
pub use implicit::ImplicitSubmanifold;
pub use sphere::Sphere;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Relative slack allowed when comparing a step length to a working radius.
const RADIUS_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Euclidean,
    Sphere,
    Hyperbolic,
    Implicit,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BackendKind::Euclidean => "euclidean",
            BackendKind::Sphere => "sphere",
            BackendKind::Hyperbolic => "hyperbolic",
            BackendKind::Implicit => "implicit",
        };
        f.write_str(s)
    }
}

/// Identity of a concrete manifold instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ManifoldId {
    pub kind: BackendKind,
    pub ambient_dim: usize,
    pub fingerprint: u64,
}

/// A point of a manifold, in ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    backend: ManifoldId,
    coords: Vector,
}

impl Point {
    pub fn coords(&self) -> &Vector {
        &self.coords
    }

    pub fn backend(&self) -> ManifoldId {
        self.backend
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords.iter().copied().collect()
    }
}

/// A tangent vector together with the point it is attached to.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    base: Point,
    components: Vector,
}

impl Tangent {
    /// Attach raw components to a base point without checking tangency.
    pub(crate) fn from_parts(base: Point, components: Vector) -> Self {
        Self { base, components }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn components(&self) -> &Vector {
        &self.components
    }

    pub fn into_components(self) -> Vector {
        self.components
    }

    pub fn scaled(&self, a: f64) -> Tangent {
        Tangent {
            base: self.base.clone(),
            components: &self.components * a,
        }
    }

    pub fn checked_add(&self, other: &Tangent) -> Result<Tangent> {
        same_base(&self.base, &other.base)?;
        Ok(Tangent {
            base: self.base.clone(),
            components: &self.components + &other.components,
        })
    }

    pub fn checked_sub(&self, other: &Tangent) -> Result<Tangent> {
        same_base(&self.base, &other.base)?;
        Ok(Tangent {
            base: self.base.clone(),
            components: &self.components - &other.components,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| *c == 0.0)
    }
}

fn same_base(a: &Point, b: &Point) -> Result<()> {
    if a.backend != b.backend || a.coords != b.coords {
        return Err(Error::structural("tangent vectors live in different tangent spaces"));
    }
    Ok(())
}

/// A geodesic ball used to describe sampling and budget regions.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }
}

/// Local geometry constants for a region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometryBudget {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Safe working radius: min of injectivity radius, convexity radius and
    /// `π / (2 √|K|)`.
    pub rho: f64,
    /// Bound on the absolute sectional curvature.
    pub curvature_bound: f64,
    /// Bound on the Hessian of `d²(·, q)` for pairs closer than `rho`.
    pub hessian_bound: f64,
    /// Bound on the ambient acceleration of geodesics of length at most `rho`.
    pub exp_smoothness: f64,
    /// Lipschitz estimate of `y ↦ log_x(y)` on the region.
    pub log_lipschitz: f64,
    /// Largest sampled normal curvature of unit-speed geodesics (implicit backend).
    pub normal_curvature: Option<f64>,
    /// True when the values come from sampling rather than closed forms.
    pub estimated: bool,
}

/// Raw operations of a manifold backend on ambient coordinate vectors.
///
/// Inputs are assumed valid; [`Space`] performs the checks.
pub trait Manifold: fmt::Debug + Send + Sync {
    fn kind(&self) -> BackendKind;
    fn ambient_dim(&self) -> usize;
    fn dim(&self) -> usize;
    /// Distinguishes instances of the same kind and dimension.
    fn fingerprint(&self) -> u64 {
        0
    }
    fn feasibility_tol(&self) -> f64;
    /// Largest constraint violation of an ambient vector.
    fn violation(&self, x: &Vector) -> f64;
    /// Map an ambient vector back onto the manifold.
    fn restore(&self, x: &Vector) -> Result<Vector>;
    fn metric(&self, x: &Vector, u: &Vector, v: &Vector) -> f64;
    /// Orthogonal projection of an ambient vector onto `T_x M`.
    fn to_tangent(&self, x: &Vector, u: &Vector) -> Vector;
    /// Riemannian gradient from the ambient (coordinate) gradient.
    fn riemannian_gradient(&self, x: &Vector, ambient_grad: &Vector) -> Vector {
        self.to_tangent(x, ambient_grad)
    }
    fn distance(&self, x: &Vector, y: &Vector) -> Result<f64>;
    fn exp(&self, x: &Vector, v: &Vector) -> Result<Vector>;
    fn log(&self, x: &Vector, y: &Vector) -> Result<Vector>;
    fn transport(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector>;
    /// Working radius used when the caller supplies no budget.
    fn default_radius(&self) -> f64;
    fn budget(&self, center: &Vector, radius: f64) -> GeometryBudget;
}

/// Shared handle to a manifold backend with checked, typed operations.
#[derive(Clone)]
pub struct Space {
    inner: Arc<dyn Manifold>,
    id: ManifoldId,
}

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Space").field("backend", &self.inner).finish()
    }
}

impl Space {
    pub fn new<M: Manifold + 'static>(manifold: M) -> Self {
        Self::from_arc(Arc::new(manifold))
    }

    pub fn from_arc(inner: Arc<dyn Manifold>) -> Self {
        let id = ManifoldId {
            kind: inner.kind(),
            ambient_dim: inner.ambient_dim(),
            fingerprint: inner.fingerprint(),
        };
        Self { inner, id }
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(Euclidean::new(dim))
    }

    pub fn sphere(dim: usize) -> Self {
        Self::new(Sphere::new(dim))
    }

    pub fn hyperbolic(dim: usize) -> Self {
        Self::new(Hyperbolic::new(dim))
    }

    pub fn id(&self) -> ManifoldId {
        self.id
    }

    pub fn kind(&self) -> BackendKind {
        self.id.kind
    }

    pub fn backend(&self) -> &dyn Manifold {
        &*self.inner
    }

    pub fn ambient_dim(&self) -> usize {
        self.id.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn feasibility_tol(&self) -> f64 {
        self.inner.feasibility_tol()
    }

    pub fn default_radius(&self) -> f64 {
        self.inner.default_radius()
    }

    /// Validate ambient coordinates as a point of this manifold.
    pub fn point(&self, coords: impl Into<Vec<f64>>) -> Result<Point> {
        let coords = Vector::from_vec(coords.into());
        self.point_from_vector(coords)
    }

    pub fn point_from_vector(&self, coords: Vector) -> Result<Point> {
        if coords.len() != self.ambient_dim() {
            return Err(Error::structural(format!(
                "point has {} coordinates, {} backend expects {}",
                coords.len(),
                self.kind(),
                self.ambient_dim()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("point has non-finite coordinates"));
        }
        let violation = self.inner.violation(&coords);
        if violation > self.feasibility_tol() {
            return Err(Error::domain(format!(
                "point is off the {} manifold (violation {violation:e})",
                self.kind()
            )));
        }
        Ok(self.wrap(coords))
    }

    /// Project arbitrary ambient coordinates onto the manifold.
    pub fn restore_point(&self, coords: &Vector) -> Result<Point> {
        let x = self.inner.restore(coords)?;
        Ok(self.wrap(x))
    }

    pub(crate) fn wrap(&self, coords: Vector) -> Point {
        Point {
            backend: self.id,
            coords,
        }
    }

    fn owns(&self, p: &Point) -> Result<()> {
        if p.backend != self.id {
            return Err(Error::structural(format!(
                "point belongs to a {} backend, expected {}",
                p.backend.kind,
                self.kind()
            )));
        }
        Ok(())
    }

    fn check_tangent(&self, base: &Point, v: &Tangent) -> Result<()> {
        self.owns(base)?;
        same_base(base, &v.base).map_err(|_| Error::structural("tangent vector is attached to a different base point"))
    }

    /// Build a tangent vector, rejecting components that leave `T_x M`.
    pub fn tangent(&self, base: &Point, components: impl Into<Vec<f64>>) -> Result<Tangent> {
        self.owns(base)?;
        let u = Vector::from_vec(components.into());
        if u.len() != self.ambient_dim() {
            return Err(Error::structural("tangent has wrong number of components"));
        }
        let projected = self.inner.to_tangent(&base.coords, &u);
        let scale = 1.0 + u.norm();
        if (&projected - &u).norm() > 1e3 * self.feasibility_tol() * scale {
            return Err(Error::domain("components do not lie in the tangent space"));
        }
        Ok(Tangent {
            base: base.clone(),
            components: projected,
        })
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn project_tangent(&self, base: &Point, ambient: &Vector) -> Tangent {
        Tangent {
            base: base.clone(),
            components: self.inner.to_tangent(&base.coords, ambient),
        }
    }

    pub fn zero(&self, base: &Point) -> Tangent {
        Tangent {
            base: base.clone(),
            components: Vector::zeros(self.ambient_dim()),
        }
    }

    /// Riemannian gradient at `x` of a function with ambient gradient `grad`.
    pub fn riemannian_gradient(&self, x: &Point, grad: &Vector) -> Tangent {
        Tangent {
            base: x.clone(),
            components: self.inner.riemannian_gradient(&x.coords, grad),
        }
    }

    pub fn inner(&self, u: &Tangent, v: &Tangent) -> Result<f64> {
        same_base(&u.base, &v.base)?;
        Ok(self.inner.metric(&u.base.coords, &u.components, &v.components))
    }

    pub fn norm(&self, v: &Tangent) -> f64 {
        self.inner
            .metric(&v.base.coords, &v.components, &v.components)
            .max(0.0)
            .sqrt()
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.owns(x)?;
        self.owns(y)?;
        if x.coords == y.coords {
            return Ok(0.0);
        }
        self.inner.distance(&x.coords, &y.coords)
    }

    pub fn exp(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.exp_within(x, v, self.default_radius())
    }

    /// Exponential map with an explicit working radius.
    pub fn exp_within(&self, x: &Point, v: &Tangent, radius: f64) -> Result<Point> {
        self.check_tangent(x, v)?;
        let len = self.norm(v);
        if len == 0.0 {
            return Ok(x.clone());
        }
        if len > radius * (1.0 + RADIUS_SLACK) {
            return Err(Error::domain(format!(
                "tangent of length {len} exceeds the working radius {radius}"
            )));
        }
        Ok(self.wrap(self.inner.exp(&x.coords, &v.components)?))
    }

    /// The tangent vector `Γ_{x,y}` at `x` whose unit-time geodesic reaches `y`.
    pub fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.log_within(x, y, self.default_radius())
    }

    pub fn log_within(&self, x: &Point, y: &Point, radius: f64) -> Result<Tangent> {
        self.owns(x)?;
        self.owns(y)?;
        if x.coords == y.coords {
            return Ok(self.zero(x));
        }
        let components = self.inner.log(&x.coords, &y.coords)?;
        let out = Tangent {
            base: x.clone(),
            components,
        };
        let len = self.norm(&out);
        if len > radius * (1.0 + RADIUS_SLACK) {
            return Err(Error::domain(format!(
                "points are {len} apart, beyond the working radius {radius}"
            )));
        }
        Ok(out)
    }

    /// Parallel transport of `v` from `x` to `y` along the short geodesic.
    pub fn transport(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        self.check_tangent(x, v)?;
        self.owns(y)?;
        if x.coords == y.coords {
            return Ok(v.clone());
        }
        let d = self.distance(x, y)?;
        let radius = self.default_radius();
        if d > radius * (1.0 + RADIUS_SLACK) {
            return Err(Error::domain(format!(
                "transport over distance {d} exceeds the working radius {radius}"
            )));
        }
        Ok(Tangent {
            base: y.clone(),
            components: self.inner.transport(&x.coords, &y.coords, &v.components)?,
        })
    }

    /// Riemannian gradient of `d²(·, y)` at `x`, equal to `-2 Γ_{x,y}`.
    pub fn grad_sq_distance(&self, x: &Point, y: &Point) -> Result<Tangent> {
        Ok(self.log(x, y)?.scaled(-2.0))
    }

    pub fn budget(&self, region: &Ball) -> Result<GeometryBudget> {
        self.owns(&region.center)?;
        if !(region.radius.is_finite() && region.radius > 0.0) {
            return Err(Error::domain("budget region radius must be finite and positive"));
        }
        Ok(self.inner.budget(&region.center.coords, region.radius))
    }

    /// Uniformly distributed unit tangent vector at `x`.
    pub fn random_unit_tangent<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Tangent {
        loop {
            let g = Vector::from_fn(self.ambient_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let t = self.project_tangent(x, &g);
            let n = self.norm(&t);
            if n > 1e-8 {
                return t.scaled(1.0 / n);
            }
        }
    }

    /// A point `exp_c(r u)` with `u` uniform on the unit sphere of `T_c M` and
    /// `r` distributed like the radius of a uniform sample in a `dim`-ball.
    pub fn random_point_in_ball<R: Rng + ?Sized>(&self, center: &Point, radius: f64, rng: &mut R) -> Result<Point> {
        let u = self.random_unit_tangent(center, rng);
        let r = radius * rng.random::<f64>().powf(1.0 / self.dim().max(1) as f64);
        self.exp(center, &u.scaled(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_tangent_spaces_is_rejected() {
        let s = Space::sphere(2);
        let x = s.point([0.0, 0.0, 1.0]).unwrap();
        let y = s.point([1.0, 0.0, 0.0]).unwrap();
        let vx = s.tangent(&x, [0.1, 0.0, 0.0]).unwrap();
        let vy = s.tangent(&y, [0.0, 0.1, 0.0]).unwrap();
        assert!(matches!(s.exp(&y, &vx), Err(Error::Structural(_))));
        assert!(matches!(s.inner(&vx, &vy), Err(Error::Structural(_))));
        assert!(matches!(vx.checked_add(&vy), Err(Error::Structural(_))));
    }

    #[test]
    fn backend_mismatch_is_structural() {
        let e = Space::euclidean(3);
        let s = Space::sphere(2);
        let p = s.point([0.0, 0.0, 1.0]).unwrap();
        let q = e.point([0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(e.distance(&p, &q), Err(Error::Structural(_))));
    }

    #[test]
    fn off_manifold_points_and_tangents_are_rejected() {
        let s = Space::sphere(2);
        assert!(s.point([0.0, 0.0, 1.1]).is_err());
        assert!(s.point([0.0, 1.0]).is_err());
        let x = s.point([0.0, 0.0, 1.0]).unwrap();
        assert!(s.tangent(&x, [0.0, 0.0, 0.5]).is_err());
    }

    #[test]
    fn exp_beyond_radius_is_domain_error() {
        let s = Space::sphere(2);
        let x = s.point([0.0, 0.0, 1.0]).unwrap();
        let v = s.tangent(&x, [2.0, 0.0, 0.0]).unwrap();
        assert!(matches!(s.exp(&x, &v), Err(Error::Domain(_))));
    }
}
