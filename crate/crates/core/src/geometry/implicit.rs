//! Submanifolds of `R^n` cut out by equality constraints `g_j(x) = 0`.
//!
//! Geodesics solve `ẍ = -Gᵀ (G Gᵀ)⁻¹ q(x, ẋ)` where `G` is the constraint
//! Jacobian and `q_j = ẋᵀ ∇²g_j ẋ`, i.e. the acceleration is normal to the
//! surface. Logarithms are found by shooting and parallel transport by
//! integrating the transport equation along the shot geodesic.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ode::{self, DopriOptions};
use super::{BackendKind, GeometryBudget, Manifold, Vector};
use crate::error::{Error, Result};
use crate::expr::{Expr, VarLayout};

const SHOOT_TOL: f64 = 1e-10;
const SHOOT_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 60;
/// Working radius before [`ImplicitSubmanifold::calibrate`] has run.
pub const UNCALIBRATED_RADIUS: f64 = 1.0;
const CEILING: f64 = 1e6;
const BUDGET_SAMPLES: usize = 256;

#[derive(Clone, Debug)]
pub struct ImplicitSubmanifold {
    ambient: usize,
    equations: Vec<Expr>,
    default_rho: f64,
    fingerprint: u64,
    ode: DopriOptions,
}

impl ImplicitSubmanifold {
    /// Compile equality constraints over `x1..xn`.
    pub fn new(ambient: usize, equalities: &[String], params: &BTreeMap<String, f64>) -> Result<Self> {
        if equalities.is_empty() {
            return Err(Error::structural("implicit manifold needs at least one equality"));
        }
        if equalities.len() >= ambient {
            return Err(Error::structural(format!(
                "{} equalities leave no dimensions in R^{ambient}",
                equalities.len()
            )));
        }
        let equations = equalities
            .iter()
            .map(|s| Expr::compile(s, VarLayout::coords(ambient), params))
            .collect::<Result<Vec<_>>>()?;
        let mut hasher = DefaultHasher::new();
        ambient.hash(&mut hasher);
        for e in &equations {
            e.source().hash(&mut hasher);
        }
        for (k, v) in params {
            k.hash(&mut hasher);
            v.to_bits().hash(&mut hasher);
        }
        Ok(Self {
            ambient,
            equations,
            default_rho: UNCALIBRATED_RADIUS,
            fingerprint: hasher.finish(),
            ode: DopriOptions::default(),
        })
    }

    /// Estimate the geometry around `center` and adopt its `rho` as the
    /// default working radius.
    pub fn calibrate(&mut self, center: &Vector, radius: f64) -> GeometryBudget {
        let budget = self.budget(center, radius);
        self.default_rho = budget.rho;
        budget
    }

    pub fn calibrated(mut self, center: &Vector, radius: f64) -> Self {
        self.calibrate(center, radius);
        self
    }

    pub fn with_default_radius(mut self, radius: f64) -> Self {
        self.default_rho = radius;
        self
    }

    pub fn codim(&self) -> usize {
        self.equations.len()
    }

    fn values(&self, x: &Vector) -> Vector {
        Vector::from_iterator(
            self.equations.len(),
            self.equations.iter().map(|e| e.value(x.as_slice())),
        )
    }

    fn jacobian(&self, x: &Vector) -> DMatrix<f64> {
        let m = self.equations.len();
        let mut g = DMatrix::zeros(m, self.ambient);
        for (j, e) in self.equations.iter().enumerate() {
            for (i, d) in e.gradient(x.as_slice()).into_iter().enumerate() {
                g[(j, i)] = d;
            }
        }
        g
    }

    /// `v ↦ (vᵀ ∇²g_j v)_j`.
    fn quadratic(&self, x: &Vector, v: &Vector) -> Vector {
        Vector::from_iterator(
            self.equations.len(),
            self.equations
                .iter()
                .map(|e| e.directional_jet(x.as_slice(), v.as_slice()).second_derivative()),
        )
    }

    /// `(vᵀ ∇²g_j w)_j` by polarization.
    fn bilinear(&self, x: &Vector, v: &Vector, w: &Vector) -> Vector {
        (self.quadratic(x, &(v + w)) - self.quadratic(x, &(v - w))) * 0.25
    }

    /// `Gᵀ (G Gᵀ)⁻¹ r`: the normal vector whose constraint derivatives are `r`.
    fn normal_lift(g: &DMatrix<f64>, r: &Vector) -> Vector {
        if g.nrows() == 1 {
            let row = g.row(0);
            let nn = row.norm_squared();
            let mu = if nn > 0.0 { r[0] / nn } else { 0.0 };
            return Vector::from_iterator(g.ncols(), row.iter().map(|gi| gi * mu));
        }
        let gram = g * g.transpose();
        let mu = match gram.clone().cholesky() {
            Some(ch) => ch.solve(r),
            None => gram.lu().solve(r).unwrap_or_else(|| Vector::zeros(r.len())),
        };
        g.transpose() * mu
    }

    fn project_with(g: &DMatrix<f64>, u: &Vector) -> Vector {
        u - Self::normal_lift(g, &(g * u))
    }

    fn newton_restore(&self, x: &Vector) -> Result<Vector> {
        let mut y = x.clone();
        for _ in 0..NEWTON_MAX_ITER {
            let r = self.values(&y);
            let viol = r.amax();
            if viol <= 1e-14 * (1.0 + y.amax()) {
                return Ok(y);
            }
            let g = self.jacobian(&y);
            y -= Self::normal_lift(&g, &r);
        }
        let viol = self.values(&y).amax();
        if viol <= self.feasibility_tol() {
            Ok(y)
        } else {
            Err(Error::numeric("Newton projection onto the constraint set failed", viol))
        }
    }

    /// Orthonormal basis of `T_x M` from projected coordinate axes.
    fn tangent_basis(&self, x: &Vector) -> Vec<Vector> {
        let g = self.jacobian(x);
        let k = self.ambient - self.equations.len();
        let mut basis: Vec<Vector> = Vec::with_capacity(k);
        let mut candidates: Vec<Vector> = (0..self.ambient)
            .map(|i| Self::project_with(&g, &Vector::from_fn(self.ambient, |r, _| f64::from(r == i))))
            .collect();
        // Largest projections first gives a well-conditioned Gram–Schmidt.
        candidates.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        for mut c in candidates {
            for b in &basis {
                c -= b * b.dot(&c);
            }
            let n = c.norm();
            if n > 1e-8 {
                basis.push(c / n);
            }
            if basis.len() == k {
                break;
            }
        }
        basis
    }

    /// Integrate the geodesic from `(x, v)` over unit time, optionally
    /// transporting `w` alongside. Returns the end point, end velocity and
    /// transported vector.
    fn flow(&self, x: &Vector, v: &Vector, w: Option<&Vector>) -> Result<(Vector, Vector, Option<Vector>)> {
        let n = self.ambient;
        let with_w = w.is_some();
        let len = if with_w { 3 * n } else { 2 * n };
        let mut state = Vector::zeros(len);
        state.rows_mut(0, n).copy_from(x);
        state.rows_mut(n, n).copy_from(v);
        if let Some(w) = w {
            state.rows_mut(2 * n, n).copy_from(w);
        }
        let speed = v.norm();
        let w_norm = w.map(|w| w.norm()).unwrap_or(0.0);

        let rhs = |_t: f64, s: &Vector| -> Vector {
            let x = s.rows(0, n).into_owned();
            let v = s.rows(n, n).into_owned();
            let g = self.jacobian(&x);
            let mut out = Vector::zeros(len);
            out.rows_mut(0, n).copy_from(&v);
            let acc = -Self::normal_lift(&g, &self.quadratic(&x, &v));
            out.rows_mut(n, n).copy_from(&acc);
            if with_w {
                let w = s.rows(2 * n, n).into_owned();
                let dw = -Self::normal_lift(&g, &self.bilinear(&x, &v, &w));
                out.rows_mut(2 * n, n).copy_from(&dw);
            }
            out
        };
        let post = |s: &mut Vector| {
            let x = s.rows(0, n).into_owned();
            let Ok(x) = self.newton_restore(&x) else {
                return;
            };
            let g = self.jacobian(&x);
            let v = Self::project_with(&g, &s.rows(n, n).into_owned());
            let vn = v.norm();
            s.rows_mut(0, n).copy_from(&x);
            if vn > 0.0 {
                s.rows_mut(n, n).copy_from(&(v * (speed / vn)));
            }
            if with_w {
                let w = Self::project_with(&g, &s.rows(2 * n, n).into_owned());
                let wn = w.norm();
                if wn > 0.0 {
                    s.rows_mut(2 * n, n).copy_from(&(w * (w_norm / wn)));
                }
            }
        };
        let end = ode::integrate(rhs, state, 0.0, 1.0, self.ode, post)?;
        let x1 = end.rows(0, n).into_owned();
        let v1 = end.rows(n, n).into_owned();
        let w1 = with_w.then(|| end.rows(2 * n, n).into_owned());
        Ok((x1, v1, w1))
    }

    fn exp_raw(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        if v.iter().all(|c| *c == 0.0) {
            return Ok(x.clone());
        }
        Ok(self.flow(x, v, None)?.0)
    }

    /// Solve `exp_x(v) = y` for `v ∈ T_x M` by damped Gauss–Newton shooting.
    fn shoot(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        let basis = self.tangent_basis(x);
        let k = basis.len();
        let velocity = |c: &[f64]| -> Vector {
            let mut v = Vector::zeros(self.ambient);
            for (ci, b) in c.iter().zip(&basis) {
                v += b * *ci;
            }
            v
        };
        let chord = y - x;
        let mut c: Vec<f64> = basis.iter().map(|b| b.dot(&chord)).collect();
        // Arc length along the osculating circle of the projected chord.
        let t = velocity(&c);
        let tn = t.norm();
        if tn > 0.0 {
            let acc = Self::normal_lift(&self.jacobian(x), &self.quadratic(x, &t));
            let z = acc.norm() / tn;
            let gain = if z < 0.99 {
                z.asin() / z.max(f64::MIN_POSITIVE)
            } else {
                1.0 + z * z / 6.0
            };
            let gain = if z > 0.0 { gain } else { 1.0 };
            c.iter_mut().for_each(|ci| *ci *= gain);
        }
        let mut end = self.exp_raw(x, &velocity(&c))?;
        let mut r = &end - y;
        let mut rn = r.norm();
        let mut jac: Option<DMatrix<f64>> = None;
        let mut fresh = false;
        for _ in 0..SHOOT_MAX_ITER {
            if rn <= SHOOT_TOL {
                return Ok(velocity(&c));
            }
            let jm = match jac.take() {
                Some(j) => j,
                None => {
                    fresh = true;
                    let scale = c.iter().map(|v| v.abs()).fold(1.0, f64::max);
                    let eps = 1e-7 * scale;
                    let mut j = DMatrix::zeros(self.ambient, k);
                    for i in 0..k {
                        let mut cp = c.clone();
                        cp[i] += eps;
                        let col = (self.exp_raw(x, &velocity(&cp))? - &end) / eps;
                        j.set_column(i, &col);
                    }
                    j
                }
            };
            let jt = jm.transpose();
            let mut normal = &jt * &jm;
            for i in 0..k {
                normal[(i, i)] += 1e-14;
            }
            let rhs = -(&jt * &r);
            let delta = normal
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::numeric("singular shooting Jacobian", rn))?;
            let mut lambda = 1.0;
            let accepted = loop {
                let trial: Vec<f64> = c.iter().zip(delta.iter()).map(|(a, d)| a + lambda * d).collect();
                let trial_end = self.exp_raw(x, &velocity(&trial))?;
                let trial_r = &trial_end - y;
                let trial_n = trial_r.norm();
                if trial_n < rn {
                    break Some((trial, trial_end, trial_r, trial_n));
                }
                lambda *= 0.5;
                if lambda < 1e-6 {
                    break None;
                }
            };
            match accepted {
                Some((trial, trial_end, trial_r, trial_n)) => {
                    // Broyden update of the reused Jacobian.
                    let dc = DVector::from_iterator(k, trial.iter().zip(&c).map(|(a, b)| a - b));
                    let dr = &trial_r - &r;
                    let denom = dc.norm_squared();
                    let mut jm = jm;
                    if denom > 0.0 {
                        let corr = (&dr - &jm * &dc) / denom;
                        jm += corr * dc.transpose();
                    }
                    jac = Some(jm);
                    fresh = false;
                    c = trial;
                    end = trial_end;
                    r = trial_r;
                    rn = trial_n;
                }
                None if fresh => return Err(Error::numeric("geodesic shooting stalled", rn)),
                None => {}
            }
        }
        if rn <= SHOOT_TOL {
            Ok(velocity(&c))
        } else {
            Err(Error::numeric("geodesic shooting did not converge", rn))
        }
    }

    /// Largest normal acceleration `|Gᵀ(GGᵀ)⁻¹ q(u)|` over sampled unit tangents.
    fn normal_curvature_at(&self, x: &Vector, rng: &mut ChaCha8Rng) -> f64 {
        let g = self.jacobian(x);
        let basis = self.tangent_basis(x);
        let mut dirs = basis.clone();
        for _ in 0..8 {
            let mut u = Vector::zeros(self.ambient);
            for b in &basis {
                let a: f64 = StandardNormal.sample(rng);
                u += b * a;
            }
            let n = u.norm();
            if n > 1e-12 {
                dirs.push(u / n);
            }
        }
        dirs.iter()
            .map(|u| Self::normal_lift(&g, &self.quadratic(x, u)).norm())
            .fold(0.0, f64::max)
    }
}

impl Manifold for ImplicitSubmanifold {
    fn kind(&self) -> BackendKind {
        BackendKind::Implicit
    }

    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn dim(&self) -> usize {
        self.ambient - self.equations.len()
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn feasibility_tol(&self) -> f64 {
        1e-8
    }

    fn violation(&self, x: &Vector) -> f64 {
        self.values(x).amax()
    }

    fn restore(&self, x: &Vector) -> Result<Vector> {
        self.newton_restore(x)
    }

    fn metric(&self, _x: &Vector, u: &Vector, v: &Vector) -> f64 {
        u.dot(v)
    }

    fn to_tangent(&self, x: &Vector, u: &Vector) -> Vector {
        Self::project_with(&self.jacobian(x), u)
    }

    fn distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        Ok(self.log(x, y)?.norm())
    }

    fn exp(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        self.exp_raw(x, v)
    }

    fn log(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        let chord = (y - x).norm();
        if chord == 0.0 {
            return Ok(Vector::zeros(self.ambient));
        }
        // The chord never exceeds the geodesic distance.
        if chord > self.default_rho * (1.0 + 1e-9) {
            return Err(Error::domain(format!(
                "points are at least {chord} apart, beyond the working radius {}",
                self.default_rho
            )));
        }
        self.shoot(x, y)
    }

    fn transport(&self, x: &Vector, y: &Vector, v: &Vector) -> Result<Vector> {
        let gamma = self.log(x, y)?;
        let (_, _, w) = self.flow(x, &gamma, Some(v))?;
        let w = w.expect("transport requested");
        let g = self.jacobian(y);
        let w = Self::project_with(&g, &w);
        let (wn, vn) = (w.norm(), v.norm());
        Ok(if wn > 0.0 { w * (vn / wn) } else { w })
    }

    fn default_radius(&self) -> f64 {
        self.default_rho
    }

    fn budget(&self, center: &Vector, radius: f64) -> GeometryBudget {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b0d9e7);
        let anchor = self.newton_restore(center).unwrap_or_else(|_| center.clone());
        let mut kappa = self.normal_curvature_at(&anchor, &mut rng);
        let n = self.ambient;
        for _ in 0..BUDGET_SAMPLES {
            let dir = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let dir = &dir / dir.norm();
            let r = radius * rand::Rng::random::<f64>(&mut rng).powf(1.0 / n as f64);
            let Ok(p) = self.newton_restore(&(center + dir * r)) else {
                continue;
            };
            if (&p - center).norm() <= radius {
                kappa = kappa.max(self.normal_curvature_at(&p, &mut rng));
            }
        }
        let dim = self.dim();
        let sectional = if dim <= 1 {
            0.0
        } else if self.codim() == 1 {
            kappa * kappa
        } else {
            2.0 * kappa * kappa
        };
        let mut rho = CEILING;
        if kappa > 1e-12 {
            rho = rho.min(FRAC_PI_2 / kappa);
        }
        if sectional > 1e-24 {
            rho = rho.min(FRAC_PI_2 / sectional.sqrt());
        }
        let sk = rho * sectional.sqrt();
        GeometryBudget {
            center: center.iter().copied().collect(),
            radius,
            rho,
            curvature_bound: sectional,
            hessian_bound: if sk > 1e-12 { 2.0 * sk / sk.tanh() } else { 2.0 },
            exp_smoothness: (kappa * rho * rho).max(f64::MIN_POSITIVE),
            log_lipschitz: 1.0 + kappa * rho,
            normal_curvature: Some(kappa),
            estimated: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Ball, Space};
    use std::f64::consts::FRAC_PI_4;

    fn circle() -> Space {
        let m = ImplicitSubmanifold::new(2, &["x1^2 + x2^2 - 1".to_string()], &BTreeMap::new())
            .unwrap()
            .calibrated(&Vector::from_vec(vec![1.0, 0.0]), 1.0);
        Space::new(m)
    }

    #[test]
    fn circle_quarter_arc() {
        // Oracle: on the unit circle geodesic distance is arc length.
        let s = circle();
        let a = s.point([1.0, 0.0]).unwrap();
        let b = s.point([0.0, 1.0]).unwrap();
        let d = s.distance(&a, &b).unwrap();
        assert!((d - FRAC_PI_2).abs() < 1e-8, "{d}");
    }

    #[test]
    fn circle_exp_eighth_turn() {
        let s = circle();
        let a = s.point([1.0, 0.0]).unwrap();
        let v = s.tangent(&a, [0.0, FRAC_PI_4]).unwrap();
        let y = s.exp(&a, &v).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((y.coords()[0] - h).abs() < 1e-9);
        assert!((y.coords()[1] - h).abs() < 1e-9);
    }

    #[test]
    fn circle_transport_rotates_tangent() {
        let s = circle();
        let a = s.point([1.0, 0.0]).unwrap();
        let b = s.point([0.0, 1.0]).unwrap();
        let v = s.tangent(&a, [0.0, 0.5]).unwrap();
        let w = s.transport(&a, &b, &v).unwrap();
        assert!((w.components()[0] + 0.5).abs() < 1e-8);
        assert!(w.components()[1].abs() < 1e-8);
    }

    #[test]
    fn ellipse_curvature_estimate_matches_analytic() {
        // Curvature of x²/4 + y² = 1 at (2cos θ, sin θ) is 2 / (4 sin²θ + cos²θ)^{3/2}.
        let m = ImplicitSubmanifold::new(2, &["x1^2/4 + x2^2 - 1".to_string()], &BTreeMap::new()).unwrap();
        let s = Space::new(m);
        let c = s.point([2.0, 0.0]).unwrap();
        let b = s.budget(&Ball::new(c, 0.5)).unwrap();
        let kappa = b.normal_curvature.unwrap();
        assert!(b.estimated);
        assert!((kappa - 2.0).abs() < 1e-9, "{kappa}");
        assert_eq!(b.curvature_bound, 0.0);
        assert!((b.rho - FRAC_PI_2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_constraint_sets() {
        let p = BTreeMap::new();
        assert!(ImplicitSubmanifold::new(2, &[], &p).is_err());
        assert!(ImplicitSubmanifold::new(2, &["x1".into(), "x2".into()], &p).is_err());
        assert!(ImplicitSubmanifold::new(2, &["x3".into()], &p).is_err());
    }
}
