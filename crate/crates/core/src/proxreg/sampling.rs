//! Seeded samplers for members and boundary points of a moving set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Ball, Point, Space, Tangent};
use crate::sets::{MovingSet, SetOps};

const MEMBER_TRIES: usize = 64;
const BOUNDARY_TRIES: usize = 32;
const MARCH_STEPS: usize = 32;
const BISECT_TOL: f64 = 1e-9;

/// Independent deterministic generator for item `k` of a seeded batch.
pub(crate) fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Largest safe sampling radius for `region` on `space`.
pub(crate) fn sampling_radius(space: &Space, region: &Ball) -> f64 {
    region.radius.min(0.9 * space.default_radius())
}

/// A member of `C(t)` inside `region`, falling back to projecting a random
/// point when rejection sampling finds nothing.
pub(crate) fn member_in<S: MovingSet + ?Sized, R: Rng>(set: &S, t: f64, region: &Ball, rng: &mut R) -> Result<Point> {
    let space = set.space();
    let r = sampling_radius(space, region);
    for _ in 0..MEMBER_TRIES {
        let p = space.random_point_in_ball(&region.center, r, rng)?;
        if set.member(t, &p) {
            return Ok(p);
        }
    }
    let p = space.random_point_in_ball(&region.center, r, rng)?;
    let proj = set.project(t, &p).map_err(|e| no_members(region, &e.to_string()))?;
    Ok(proj.point)
}

fn no_members(region: &Ball, why: &str) -> Error {
    Error::structural(format!(
        "no members of the set found in the region of radius {} around {:?} ({why})",
        region.radius,
        region.center.coords().as_slice()
    ))
}

/// A boundary point near `region`: march from a member along a random
/// geodesic until membership fails, bisect, then polish by projection.
pub(crate) fn boundary_in<S: MovingSet + ?Sized, R: Rng>(set: &S, t: f64, region: &Ball, rng: &mut R) -> Result<Point> {
    let space = set.space();
    let r = sampling_radius(space, region);
    let reach = (2.0 * r).min(0.9 * space.default_radius());
    for _ in 0..BOUNDARY_TRIES {
        let m = member_in(set, t, region, rng)?;
        if !set.active_set(t, &m).is_empty() {
            return Ok(m);
        }
        let u = space.random_unit_tangent(&m, rng);
        let at = |s: f64| space.exp(&m, &u.scaled(s));
        let step = reach / MARCH_STEPS as f64;
        let mut inside = 0.0;
        let mut outside = None;
        for k in 1..=MARCH_STEPS {
            let s = step * k as f64;
            if !set.member(t, &at(s)?) {
                outside = Some(s);
                break;
            }
            inside = s;
        }
        let Some(mut out) = outside else { continue };
        while out - inside > BISECT_TOL {
            let mid = 0.5 * (inside + out);
            if set.member(t, &at(mid)?) {
                inside = mid;
            } else {
                out = mid;
            }
        }
        let y = at(out)?;
        match set.project(t, &y) {
            Ok(p) if p.converged && !p.active_set.is_empty() => return Ok(p.point),
            _ => return at(inside),
        }
    }
    Err(Error::structural(format!(
        "no boundary points found near the region of radius {} around {:?}",
        region.radius,
        region.center.coords().as_slice()
    )))
}

/// Random unit vector in the cone spanned by the normal generators at `x`.
pub(crate) fn unit_normal<S: MovingSet + ?Sized, R: Rng>(
    set: &S,
    t: f64,
    x: &Point,
    rng: &mut R,
) -> Result<Option<Tangent>> {
    let gens = set.proximal_normal_generators(t, x)?;
    if gens.is_empty() {
        return Ok(None);
    }
    let space = set.space();
    let mut v = space.zero(x);
    for g in &gens {
        let w = if gens.len() == 1 { 1.0 } else { rng.random::<f64>() };
        v = v.checked_add(&g.scaled(w / space.norm(g)))?;
    }
    let n = space.norm(&v);
    Ok((n > 1e-12).then(|| v.scaled(1.0 / n)))
}
