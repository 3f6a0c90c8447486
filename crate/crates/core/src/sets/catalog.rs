//! Analytic test sets with closed-form projections.

use super::{MovingSet, ProjectionResult, SetSettings};
use crate::error::{Error, Result};
use crate::geometry::{BackendKind, Point, Space, Tangent, Vector};

fn require(space: &Space, kind: BackendKind, what: &str) -> Result<()> {
    if space.kind() != kind {
        return Err(Error::structural(format!(
            "{what} is defined on the {kind} backend, not {}",
            space.kind()
        )));
    }
    Ok(())
}

fn tangent_at(x: &Point, components: Vector) -> Tangent {
    Tangent::from_parts(x.clone(), components)
}

fn unit_vector(v: Vec<f64>, what: &str) -> Result<Vector> {
    let v = Vector::from_vec(v);
    let n = v.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::domain(format!("{what} must be a nonzero finite vector")));
    }
    Ok(v / n)
}

/// `{x ∈ R^n : ⟨a, x⟩ ≥ b₀ + b₁ t}`.
#[derive(Clone, Debug)]
pub struct HalfSpace {
    space: Space,
    normal: Vector,
    offset: f64,
    speed: f64,
    settings: SetSettings,
}

impl HalfSpace {
    pub fn new(space: &Space, normal: impl Into<Vec<f64>>, offset: f64, speed: f64) -> Result<Self> {
        require(space, BackendKind::Euclidean, "half_space")?;
        let raw = Vector::from_vec(normal.into());
        if raw.len() != space.ambient_dim() {
            return Err(Error::structural("half_space normal has the wrong dimension"));
        }
        let n = raw.norm();
        let normal = unit_vector(raw.iter().copied().collect(), "half_space normal")?;
        Ok(Self {
            space: space.clone(),
            normal,
            offset: offset / n,
            speed: speed / n,
            settings: SetSettings::default(),
        })
    }

    fn level(&self, t: f64) -> f64 {
        self.offset + self.speed * t
    }
}

impl MovingSet for HalfSpace {
    fn space(&self) -> &Space {
        &self.space
    }

    fn settings(&self) -> &SetSettings {
        &self.settings
    }

    fn settings_mut(&mut self) -> &mut SetSettings {
        &mut self.settings
    }

    fn constraint_count(&self) -> usize {
        1
    }

    fn constraint_values(&self, t: f64, x: &Point) -> Vec<f64> {
        vec![self.normal.dot(x.coords()) - self.level(t)]
    }

    fn constraint_gradients(&self, _t: f64, x: &Point) -> Result<Vec<Tangent>> {
        Ok(vec![tangent_at(x, self.normal.clone())])
    }

    fn closed_form_projection(&self, t: f64, y: &Point) -> Option<Result<ProjectionResult>> {
        let g = self.constraint_values(t, y)[0];
        let gap = (-g).max(0.0);
        let point = if gap > 0.0 {
            self.space.wrap(y.coords() + &self.normal * gap)
        } else {
            y.clone()
        };
        Some(Ok(ProjectionResult {
            active_set: if g.abs() <= super::ACTIVITY_TOL || gap > 0.0 {
                vec![0]
            } else {
                vec![]
            },
            point,
            dist: gap,
            iterations: 0,
            converged: true,
            flagged: false,
        }))
    }

    fn analytic_lipschitz(&self) -> Option<f64> {
        Some(self.speed.abs())
    }

    fn describe(&self) -> String {
        format!(
            "half-space <{:?}, x> >= {} + {} t",
            self.normal.as_slice(),
            self.offset,
            self.speed
        )
    }
}

/// Shared geometry of sets bounded by a geodesic sphere around a moving
/// center `c(t) = exp_{c₀}(t w)`.
#[derive(Clone, Debug)]
struct MovingCenter {
    space: Space,
    center: Point,
    velocity: Option<Tangent>,
    radius: f64,
}

impl MovingCenter {
    fn new(space: &Space, center: Point, radius: f64, velocity: Option<Tangent>) -> Result<Self> {
        if center.backend() != space.id() {
            return Err(Error::structural("ball center belongs to another backend"));
        }
        if let Some(v) = &velocity {
            if v.base() != &center {
                return Err(Error::structural("ball velocity must be tangent at the center"));
            }
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::domain("ball radius must be finite and positive"));
        }
        if radius > space.default_radius() * (1.0 + 1e-9) {
            return Err(Error::domain(format!(
                "ball radius {radius} exceeds the working radius {}",
                space.default_radius()
            )));
        }
        Ok(Self {
            space: space.clone(),
            center,
            velocity,
            radius,
        })
    }

    fn at(&self, t: f64) -> Point {
        match &self.velocity {
            None => self.center.clone(),
            Some(v) if t == 0.0 || v.is_zero() => self.center.clone(),
            Some(v) => {
                let raw = self.space.backend().exp(self.center.coords(), &(v.components() * t));
                self.space.wrap(raw.unwrap_or_else(|_| self.center.coords().clone()))
            }
        }
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Vector> {
        if x.coords() == y.coords() {
            return Ok(Vector::zeros(self.space.ambient_dim()));
        }
        self.space.backend().log(x.coords(), y.coords())
    }

    fn dist(&self, x: &Point, y: &Point) -> f64 {
        if x.coords() == y.coords() {
            return 0.0;
        }
        self.space
            .backend()
            .distance(x.coords(), y.coords())
            .unwrap_or(f64::INFINITY)
    }

    /// The point at distance `radius` from the center on the ray through `y`.
    fn radial(&self, c: &Point, y: &Point) -> Result<(Point, bool)> {
        let d = self.dist(c, y);
        let (dir, flagged) = if d < 1e-12 {
            (self.fallback_direction(c), true)
        } else {
            (self.log(c, y)? / d, false)
        };
        let p = self.space.backend().exp(c.coords(), &(dir * self.radius))?;
        Ok((self.space.wrap(p), flagged))
    }

    fn fallback_direction(&self, c: &Point) -> Vector {
        let n = self.space.ambient_dim();
        (0..n)
            .map(|i| {
                let e = Vector::from_fn(n, |r, _| f64::from(r == i));
                self.space.project_tangent(c, &e)
            })
            .max_by(|a, b| self.space.norm(a).total_cmp(&self.space.norm(b)))
            .map(|t| {
                let n = self.space.norm(&t);
                t.into_components() / n
            })
            .expect("manifold has at least one ambient direction")
    }

    fn speed(&self) -> f64 {
        self.velocity.as_ref().map_or(0.0, |v| self.space.norm(v))
    }
}

/// Closed geodesic ball `{x : d(x, c(t)) ≤ r}`.
#[derive(Clone, Debug)]
pub struct Ball {
    geo: MovingCenter,
    settings: SetSettings,
}

impl Ball {
    pub fn new(space: &Space, center: Point, radius: f64, velocity: Option<Tangent>) -> Result<Self> {
        Ok(Self {
            geo: MovingCenter::new(space, center, radius, velocity)?,
            settings: SetSettings::default(),
        })
    }

    pub fn center_at(&self, t: f64) -> Point {
        self.geo.at(t)
    }
}

impl MovingSet for Ball {
    fn space(&self) -> &Space {
        &self.geo.space
    }

    fn settings(&self) -> &SetSettings {
        &self.settings
    }

    fn settings_mut(&mut self) -> &mut SetSettings {
        &mut self.settings
    }

    fn constraint_count(&self) -> usize {
        1
    }

    fn constraint_values(&self, t: f64, x: &Point) -> Vec<f64> {
        let d = self.geo.dist(&self.geo.at(t), x);
        vec![self.geo.radius * self.geo.radius - d * d]
    }

    fn constraint_gradients(&self, t: f64, x: &Point) -> Result<Vec<Tangent>> {
        let c = self.geo.at(t);
        Ok(vec![tangent_at(x, self.geo.log(x, &c)? * 2.0)])
    }

    fn closed_form_projection(&self, t: f64, y: &Point) -> Option<Result<ProjectionResult>> {
        let c = self.geo.at(t);
        let d = self.geo.dist(&c, y);
        if d <= self.geo.radius {
            let on_boundary = (self.geo.radius * self.geo.radius - d * d).abs() <= super::ACTIVITY_TOL;
            return Some(Ok(ProjectionResult {
                point: y.clone(),
                dist: 0.0,
                active_set: if on_boundary { vec![0] } else { vec![] },
                iterations: 0,
                converged: true,
                flagged: false,
            }));
        }
        Some(self.geo.radial(&c, y).map(|(point, _)| ProjectionResult {
            point,
            dist: d - self.geo.radius,
            active_set: vec![0],
            iterations: 0,
            converged: true,
            flagged: false,
        }))
    }

    fn analytic_lipschitz(&self) -> Option<f64> {
        Some(self.geo.speed())
    }

    fn describe(&self) -> String {
        format!(
            "geodesic ball of radius {} around {:?}",
            self.geo.radius,
            self.geo.center.coords().as_slice()
        )
    }
}

/// Complement of the open geodesic ball, `{x : d(x, c(t)) ≥ r}`.
#[derive(Clone, Debug)]
pub struct BallComplement {
    geo: MovingCenter,
    settings: SetSettings,
}

impl BallComplement {
    pub fn new(space: &Space, center: Point, radius: f64, velocity: Option<Tangent>) -> Result<Self> {
        Ok(Self {
            geo: MovingCenter::new(space, center, radius, velocity)?,
            settings: SetSettings::default(),
        })
    }

    pub fn center_at(&self, t: f64) -> Point {
        self.geo.at(t)
    }
}

impl MovingSet for BallComplement {
    fn space(&self) -> &Space {
        &self.geo.space
    }

    fn settings(&self) -> &SetSettings {
        &self.settings
    }

    fn settings_mut(&mut self) -> &mut SetSettings {
        &mut self.settings
    }

    fn constraint_count(&self) -> usize {
        1
    }

    fn constraint_values(&self, t: f64, x: &Point) -> Vec<f64> {
        let d = self.geo.dist(&self.geo.at(t), x);
        vec![d * d - self.geo.radius * self.geo.radius]
    }

    fn constraint_gradients(&self, t: f64, x: &Point) -> Result<Vec<Tangent>> {
        let c = self.geo.at(t);
        Ok(vec![tangent_at(x, self.geo.log(x, &c)? * -2.0)])
    }

    fn closed_form_projection(&self, t: f64, y: &Point) -> Option<Result<ProjectionResult>> {
        let c = self.geo.at(t);
        let d = self.geo.dist(&c, y);
        if d >= self.geo.radius {
            let on_boundary = (d * d - self.geo.radius * self.geo.radius).abs() <= super::ACTIVITY_TOL;
            return Some(Ok(ProjectionResult {
                point: y.clone(),
                dist: 0.0,
                active_set: if on_boundary { vec![0] } else { vec![] },
                iterations: 0,
                converged: true,
                flagged: false,
            }));
        }
        Some(self.geo.radial(&c, y).map(|(point, flagged)| ProjectionResult {
            point,
            dist: self.geo.radius - d,
            active_set: vec![0],
            iterations: 0,
            converged: true,
            flagged,
        }))
    }

    fn analytic_lipschitz(&self) -> Option<f64> {
        Some(self.geo.speed())
    }

    fn describe(&self) -> String {
        format!(
            "complement of the open geodesic ball of radius {} around {:?}",
            self.geo.radius,
            self.geo.center.coords().as_slice()
        )
    }
}

/// Rotating spherical cap `{x ∈ S^n : ⟨x, a(t)⟩ ≥ h}` with
/// `a(t) = cos(ωt) a₀ + sin(ωt) e`, `e ⊥ a₀`.
#[derive(Clone, Debug)]
pub struct SphereCap {
    space: Space,
    axis: Vector,
    toward: Vector,
    height: f64,
    omega: f64,
    settings: SetSettings,
}

impl SphereCap {
    /// `rotate_toward` defaults to the first coordinate axis not parallel to `axis`.
    pub fn new(
        space: &Space,
        axis: impl Into<Vec<f64>>,
        height: f64,
        omega: f64,
        rotate_toward: Option<Vec<f64>>,
    ) -> Result<Self> {
        require(space, BackendKind::Sphere, "sphere_cap")?;
        let n = space.ambient_dim();
        let axis = unit_vector(axis.into(), "sphere_cap axis")?;
        if axis.len() != n {
            return Err(Error::structural("sphere_cap axis has the wrong dimension"));
        }
        if !(height > -1.0 && height < 1.0) {
            return Err(Error::domain("sphere_cap height must lie in (-1, 1)"));
        }
        let candidates: Vec<Vector> = match rotate_toward {
            Some(v) => vec![Vector::from_vec(v)],
            None => (0..n).map(|i| Vector::from_fn(n, |r, _| f64::from(r == i))).collect(),
        };
        let toward = candidates
            .into_iter()
            .filter(|v| v.len() == n)
            .map(|v| &v - &axis * axis.dot(&v))
            .find(|v| v.norm() > 1e-8)
            .ok_or_else(|| Error::domain("sphere_cap rotation direction is parallel to the axis"))?;
        let toward = &toward / toward.norm();
        Ok(Self {
            space: space.clone(),
            axis,
            toward,
            height,
            omega,
            settings: SetSettings::default(),
        })
    }

    pub fn axis_at(&self, t: f64) -> Vector {
        let (s, c) = (self.omega * t).sin_cos();
        &self.axis * c + &self.toward * s
    }

    /// Geodesic radius of the cap around its axis.
    pub fn angular_radius(&self) -> f64 {
        self.height.acos()
    }
}

impl MovingSet for SphereCap {
    fn space(&self) -> &Space {
        &self.space
    }

    fn settings(&self) -> &SetSettings {
        &self.settings
    }

    fn settings_mut(&mut self) -> &mut SetSettings {
        &mut self.settings
    }

    fn constraint_count(&self) -> usize {
        1
    }

    fn constraint_values(&self, t: f64, x: &Point) -> Vec<f64> {
        vec![x.coords().dot(&self.axis_at(t)) - self.height]
    }

    fn constraint_gradients(&self, t: f64, x: &Point) -> Result<Vec<Tangent>> {
        let a = self.axis_at(t);
        let g = &a - x.coords() * a.dot(x.coords());
        Ok(vec![tangent_at(x, g)])
    }

    fn closed_form_projection(&self, t: f64, y: &Point) -> Option<Result<ProjectionResult>> {
        let a = self.axis_at(t);
        let cos_phi = y.coords().dot(&a).clamp(-1.0, 1.0);
        let g = cos_phi - self.height;
        if g >= 0.0 {
            return Some(Ok(ProjectionResult {
                point: y.clone(),
                dist: 0.0,
                active_set: if g <= super::ACTIVITY_TOL { vec![0] } else { vec![] },
                iterations: 0,
                converged: true,
                flagged: false,
            }));
        }
        let u = y.coords() - &a * cos_phi;
        let (u, flagged) = if u.norm() < 1e-12 {
            (self.toward.clone(), true)
        } else {
            (&u / u.norm(), false)
        };
        let theta = self.angular_radius();
        let p = &a * theta.cos() + u * theta.sin();
        let p = &p / p.norm();
        let point = self.space.wrap(p);
        let dist = self.space.distance(y, &point).unwrap_or(cos_phi.acos() - theta);
        Some(Ok(ProjectionResult {
            point,
            dist,
            active_set: vec![0],
            iterations: 0,
            converged: true,
            flagged,
        }))
    }

    fn analytic_lipschitz(&self) -> Option<f64> {
        Some(self.omega.abs())
    }

    fn describe(&self) -> String {
        format!(
            "spherical cap <x, a(t)> >= {} rotating at {} rad per unit time",
            self.height, self.omega
        )
    }
}
