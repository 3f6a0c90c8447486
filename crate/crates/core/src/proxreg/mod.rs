//! Empirical checks of prox-regularity: hypomonotonicity sampling, proximal
//! normal cone membership, projection uniqueness and log-map monotonicity.
//!
//! Every sampler takes an explicit seed and item `k` of a batch draws from
//! its own ChaCha stream, so reports are reproducible regardless of how the
//! batch is scheduled across threads.

mod sampling;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Ball, Point, Space, Tangent};
use crate::sets::{MovingSet, SetOps};

pub(crate) use sampling::{boundary_in, stream, unit_normal};

const MIN_PAIR_FRACTION: f64 = 1e-4;
const PAIR_TRIES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorstPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypomonotonicityReport {
    pub seed: u64,
    pub t: f64,
    pub region_center: Vec<f64>,
    pub region_radius: f64,
    pub samples: usize,
    /// `max ⟨v, Γ_{x,y}⟩ / (|v| d(x,y)²)` over sampled pairs.
    pub max_ratio: f64,
    pub fitted_e: f64,
    pub declared_e: Option<f64>,
    pub violations: usize,
    pub worst_pair: Option<WorstPair>,
}

struct PairSample {
    ratio: f64,
    x: Point,
    y: Point,
    v: Tangent,
}

/// Sample boundary points `x`, unit normals `v` and nearby members `y` and
/// report the largest normalized inner product `⟨v, Γ_{x,y}⟩ / d(x,y)²`.
pub fn sample_hypomonotonicity<S: MovingSet + ?Sized>(
    set: &S,
    t: f64,
    region: &Ball,
    n_samples: usize,
    declared_e: Option<f64>,
    seed: u64,
) -> Result<HypomonotonicityReport> {
    if n_samples == 0 {
        return Err(Error::domain("hypomonotonicity sampling needs at least one sample"));
    }
    let space = set.space();
    let pair_radius = region.radius.min(0.45 * space.default_radius());
    let pairs: Vec<Option<PairSample>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k);
            let x = boundary_in(set, t, region, &mut rng)?;
            let Some(v) = unit_normal(set, t, &x, &mut rng)? else {
                return Ok(None);
            };
            pair_with(set, t, &x, &v, pair_radius, &mut rng)
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<PairSample> = pairs.into_iter().flatten().collect();
    if pairs.is_empty() {
        return Err(Error::structural(format!(
            "no boundary pairs found in the region of radius {} around {:?}",
            region.radius,
            region.center.coords().as_slice()
        )));
    }
    let worst = pairs
        .iter()
        .reduce(|a, b| if b.ratio > a.ratio { b } else { a })
        .expect("nonempty");
    let violations = declared_e.map_or(0, |e| {
        pairs.iter().filter(|p| p.ratio > e + 1e-12 * (1.0 + e.abs())).count()
    });
    Ok(HypomonotonicityReport {
        seed,
        t,
        region_center: region.center.to_vec(),
        region_radius: region.radius,
        samples: pairs.len(),
        max_ratio: worst.ratio,
        fitted_e: worst.ratio.max(0.0),
        declared_e,
        violations,
        worst_pair: Some(WorstPair {
            x: worst.x.to_vec(),
            y: worst.y.to_vec(),
            v: worst.v.components().iter().copied().collect(),
        }),
    })
}

/// A member `y` near `x`: a random geodesic push, projected back when it
/// leaves the set.
fn pair_with<S: MovingSet + ?Sized, R: Rng>(
    set: &S,
    t: f64,
    x: &Point,
    v: &Tangent,
    pair_radius: f64,
    rng: &mut R,
) -> Result<Option<PairSample>> {
    let space = set.space();
    for _ in 0..PAIR_TRIES {
        let u = space.random_unit_tangent(x, rng);
        let r = pair_radius * (1.0 - rng.random::<f64>());
        let cand = space.exp(x, &u.scaled(r))?;
        let y = if set.member(t, &cand) {
            cand
        } else {
            match set.project(t, &cand) {
                Ok(p) if p.converged => p.point,
                _ => continue,
            }
        };
        let d = space.distance(x, &y)?;
        if d < MIN_PAIR_FRACTION * pair_radius {
            continue;
        }
        let ratio = space.inner(v, &space.log_within(x, &y, f64::INFINITY)?)? / (d * d);
        return Ok(Some(PairSample {
            ratio,
            x: x.clone(),
            y,
            v: v.clone(),
        }));
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConeVerdict {
    Member {
        lambda: f64,
    },
    NotMember,
    /// Too few nearby members were found to decide.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeMembershipReport {
    pub seed: u64,
    pub verdict: ConeVerdict,
    pub radii: Vec<f64>,
    /// Largest `⟨v, Γ_{x,y}⟩ / d(x,y)²` per radius shell.
    pub shell_max: Vec<Option<f64>>,
    pub shell_counts: Vec<usize>,
}

const CONE_SHELLS: usize = 11;
const MIN_SHELLS: usize = 3;
/// Growth of the shell maximum across two halvings that signals divergence.
const GROWTH: f64 = 3.5;

/// Test whether `v` is a proximal normal at `x` through the quadratic
/// inequality `⟨v, Γ_{x,y}⟩ ≤ Λ d(x,y)²` on shrinking shells of members.
pub fn test_cone_membership<S: MovingSet + ?Sized>(
    set: &S,
    t: f64,
    x: &Point,
    v: &Tangent,
    n_samples: usize,
    seed: u64,
) -> Result<ConeMembershipReport> {
    let space = set.space();
    if v.base() != x {
        return Err(Error::structural(
            "cone test vector is not attached to the tested point",
        ));
    }
    if !set.member(t, x) {
        return Err(Error::domain("cone membership is only defined at members of the set"));
    }
    let r0 = 0.5 * set.settings().prox_radius.min(0.9 * space.default_radius());
    let radii: Vec<f64> = (0..CONE_SHELLS).map(|k| r0 * 0.5f64.powi(k as i32)).collect();
    let norm = space.norm(v);
    if norm == 0.0 {
        return Ok(ConeMembershipReport {
            seed,
            verdict: ConeVerdict::Member { lambda: 0.0 },
            radii,
            shell_max: vec![None; CONE_SHELLS],
            shell_counts: vec![0; CONE_SHELLS],
        });
    }
    let v = v.scaled(1.0 / norm);
    let mut rng = stream(seed, 0);
    let draws: Vec<(Tangent, f64)> = (0..n_samples.max(1))
        .map(|_| {
            let u = space.random_unit_tangent(x, &mut rng);
            (u, 0.5 + 0.5 * rng.random::<f64>())
        })
        .collect();

    let mut shell_max = Vec::with_capacity(CONE_SHELLS);
    let mut shell_counts = Vec::with_capacity(CONE_SHELLS);
    for &r in &radii {
        let mut best: Option<f64> = None;
        let mut count = 0;
        for (u, sigma) in &draws {
            let cand = space.exp(x, &u.scaled(r * sigma))?;
            let y = if set.member(t, &cand) {
                cand
            } else {
                match set.project(t, &cand) {
                    Ok(p) if p.converged => p.point,
                    _ => continue,
                }
            };
            let d = space.distance(x, &y)?;
            if d < 1e-14 {
                continue;
            }
            let ratio = space.inner(&v, &space.log(x, &y)?)? / (d * d);
            count += 1;
            best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
        }
        shell_max.push(best);
        shell_counts.push(count);
    }

    let informative = shell_max.iter().filter(|m| m.is_some()).count();
    let verdict = if informative < MIN_SHELLS {
        ConeVerdict::Inconclusive
    } else {
        let diverges = (0..CONE_SHELLS - 2).any(|k| match (shell_max[k], shell_max[k + 2]) {
            (Some(a), Some(b)) => {
                let floor = 1e-8 / radii[k];
                a > floor && b >= GROWTH * a
            }
            _ => false,
        });
        if diverges {
            ConeVerdict::NotMember
        } else {
            let lambda = shell_max.iter().flatten().fold(0.0f64, |acc, m| acc.max(*m));
            ConeVerdict::Member { lambda }
        }
    };
    Ok(ConeMembershipReport {
        seed,
        verdict,
        radii,
        shell_max,
        shell_counts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessOptions {
    /// Query distances from the set, increasing.
    pub levels: Vec<f64>,
    pub starts: usize,
    pub tol: f64,
}

impl Default for UniquenessOptions {
    fn default() -> Self {
        Self {
            levels: (1..=20).map(|k| 0.05 * k as f64).collect(),
            starts: 16,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessLevel {
    pub distance: f64,
    pub queries: usize,
    pub agreeing: usize,
    /// Largest distance between a start's result and the first start's.
    pub max_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub seed: u64,
    pub t: f64,
    pub levels: Vec<UniquenessLevel>,
    /// Largest tested distance below which every query agreed.
    pub empirical_ell: f64,
    pub unbounded_in_range: bool,
}

/// Multi-start projections of queries pushed outward from boundary points
/// to graded distances.
pub fn probe_projection_uniqueness<S: MovingSet + ?Sized>(
    set: &S,
    t: f64,
    region: &Ball,
    n_points: usize,
    seed: u64,
    opts: &UniquenessOptions,
) -> Result<UniquenessReport> {
    let space = set.space();
    let max_len = 0.45 * space.default_radius();
    let anchors: Vec<Option<(Point, Tangent)>> = (0..n_points.max(1) as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, j);
            let Ok(x) = boundary_in(set, t, region, &mut rng) else {
                return Ok(None);
            };
            Ok(unit_normal(set, t, &x, &mut rng)?.map(|v| (x, v)))
        })
        .collect::<Result<_>>()?;
    let anchors: Vec<(Point, Tangent)> = anchors.into_iter().flatten().collect();

    let mut levels = Vec::new();
    for (i, &s) in opts.levels.iter().enumerate() {
        if s > max_len {
            break;
        }
        let spreads: Vec<f64> = anchors
            .par_iter()
            .enumerate()
            .map(|(j, (x, v))| {
                let mut rng = stream(seed, (1 << 32) + (i * anchors.len() + j) as u64);
                query_spread(set, t, x, v, s, opts.starts, &mut rng)
            })
            .collect();
        let agreeing = spreads.iter().filter(|d| **d <= opts.tol).count();
        levels.push(UniquenessLevel {
            distance: s,
            queries: spreads.len(),
            agreeing,
            max_spread: spreads.iter().copied().fold(0.0, f64::max),
        });
    }
    let prefix = levels
        .iter()
        .take_while(|l| l.queries > 0 && l.agreeing == l.queries)
        .count();
    let empirical_ell = if prefix == 0 { 0.0 } else { levels[prefix - 1].distance };
    Ok(UniquenessReport {
        seed,
        t,
        unbounded_in_range: prefix == levels.len() && !levels.is_empty(),
        levels,
        empirical_ell,
    })
}

/// Spread of multi-start projections of `exp_x(s v)`; infinite when a start
/// fails to converge.
fn query_spread<S: MovingSet + ?Sized, R: Rng>(
    set: &S,
    t: f64,
    x: &Point,
    v: &Tangent,
    s: f64,
    starts: usize,
    rng: &mut R,
) -> f64 {
    let space = set.space();
    let Ok(y) = space.exp(x, &v.scaled(s)) else {
        return f64::INFINITY;
    };
    let start_radius = (2.0 * s).min(0.9 * space.default_radius() - s);
    let mut first: Option<Point> = None;
    let mut spread: f64 = 0.0;
    for _ in 0..starts.max(1) {
        let Ok(init) = space.random_point_in_ball(&y, start_radius, rng) else {
            return f64::INFINITY;
        };
        let p = match set.project_from(t, &y, &init) {
            Ok(p) if p.converged => p.point,
            _ => return f64::INFINITY,
        };
        match &first {
            None => first = Some(p),
            Some(f) => {
                let d = space.distance(f, &p).unwrap_or(f64::INFINITY);
                spread = spread.max(d);
            }
        }
    }
    spread
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogMonotonicityReport {
    pub seed: u64,
    pub samples: usize,
    pub skipped: usize,
    /// Minimum over sampled triples of
    /// `⟨Γ_{z₂,x} − L_{z₁→z₂}Γ_{z₁,x}, Γ_{z₂,z₁}⟩ / d(z₁,z₂)²`.
    pub fitted_a: f64,
    pub max_ratio: f64,
    pub worst_triple: Option<[Vec<f64>; 3]>,
}

pub fn check_log_monotonicity(
    space: &Space,
    region: &Ball,
    n_samples: usize,
    seed: u64,
) -> Result<LogMonotonicityReport> {
    let rho = space.default_radius();
    if region.radius >= rho {
        return Err(Error::domain(format!(
            "region radius {} is not below the working radius {rho}",
            region.radius
        )));
    }
    let triples: Vec<Option<(f64, [Point; 3])>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k);
            let x = space.random_point_in_ball(&region.center, region.radius, &mut rng)?;
            let z1 = space.random_point_in_ball(&region.center, region.radius, &mut rng)?;
            let z2 = space.random_point_in_ball(&region.center, region.radius, &mut rng)?;
            let d = space.distance(&z1, &z2)?;
            if d < 1e-6 * region.radius || d > rho {
                return Ok(None);
            }
            let (Ok(g2x), Ok(g1x), Ok(g21)) = (space.log(&z2, &x), space.log(&z1, &x), space.log(&z2, &z1)) else {
                return Ok(None);
            };
            let moved = space.transport(&z1, &z2, &g1x)?;
            let ratio = space.inner(&g2x.checked_sub(&moved)?, &g21)? / (d * d);
            Ok(Some((ratio, [x, z1, z2])))
        })
        .collect::<Result<_>>()?;
    let skipped = triples.iter().filter(|t| t.is_none()).count();
    let triples: Vec<(f64, [Point; 3])> = triples.into_iter().flatten().collect();
    if triples.is_empty() {
        return Err(Error::structural("no admissible triples sampled"));
    }
    let worst = triples
        .iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .expect("nonempty");
    let max_ratio = triples.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(LogMonotonicityReport {
        seed,
        samples: triples.len(),
        skipped,
        fitted_a: worst.0,
        max_ratio,
        worst_triple: Some([worst.1[0].to_vec(), worst.1[1].to_vec(), worst.1[2].to_vec()]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{Ball as BallSet, BallComplement};

    fn disk() -> BallSet {
        let s = Space::euclidean(2);
        BallSet::new(&s, s.point([0.0, 0.0]).unwrap(), 1.0, None).unwrap()
    }

    #[test]
    fn convex_disk_has_zero_hypomonotonicity() {
        let d = disk();
        let region = Ball::new(d.space().point([0.8, 0.0]).unwrap(), 0.5);
        let r = sample_hypomonotonicity(&d, 0.0, &region, 200, None, 7).unwrap();
        assert!(r.fitted_e <= 1e-10, "{}", r.fitted_e);
    }

    #[test]
    fn complement_of_disk_attains_one_half() {
        // Oracle: for x, y on the unit circle and v = -x, ⟨v, y - x⟩ / |y - x|² = 1/2.
        let s = Space::euclidean(2);
        let c = BallComplement::new(&s, s.point([0.0, 0.0]).unwrap(), 1.0, None).unwrap();
        let region = Ball::new(s.point([1.0, 0.0]).unwrap(), 0.5);
        let r = sample_hypomonotonicity(&c, 0.0, &region, 300, None, 3).unwrap();
        assert!((r.fitted_e - 0.5).abs() < 1e-6, "{}", r.fitted_e);
        let again = sample_hypomonotonicity(&c, 0.0, &region, 300, Some(r.fitted_e * 1.05), 4).unwrap();
        assert_eq!(again.violations, 0);
    }

    #[test]
    fn cone_test_separates_normal_and_tangential() {
        let d = disk();
        let s = d.space().clone();
        let x = s.point([1.0, 0.0]).unwrap();
        let out = s.tangent(&x, [1.0, 0.0]).unwrap();
        let tang = s.tangent(&x, [0.0, 1.0]).unwrap();
        let r = test_cone_membership(&d, 0.0, &x, &out, 64, 1).unwrap();
        assert!(matches!(r.verdict, ConeVerdict::Member { .. }));
        let r = test_cone_membership(&d, 0.0, &x, &tang, 64, 1).unwrap();
        assert_eq!(r.verdict, ConeVerdict::NotMember);
        let r = test_cone_membership(&d, 0.0, &x, &s.zero(&x), 64, 1).unwrap();
        assert_eq!(r.verdict, ConeVerdict::Member { lambda: 0.0 });
    }

    #[test]
    fn uniqueness_radius_of_disk_complement() {
        let s = Space::euclidean(2);
        let c = BallComplement::new(&s, s.point([0.0, 0.0]).unwrap(), 1.0, None).unwrap();
        let region = Ball::new(s.point([1.0, 0.0]).unwrap(), 0.3);
        let r = probe_projection_uniqueness(&c, 0.0, &region, 4, 11, &UniquenessOptions::default()).unwrap();
        assert!(r.empirical_ell >= 0.9 && r.empirical_ell <= 1.0, "{r:?}");
        assert!(!r.unbounded_in_range);
        let d = disk();
        let r = probe_projection_uniqueness(&d, 0.0, &region, 4, 11, &UniquenessOptions::default()).unwrap();
        assert!(r.unbounded_in_range);
    }

    #[test]
    fn flat_log_monotonicity_is_exactly_one() {
        let s = Space::euclidean(3);
        let region = Ball::new(s.point([0.0, 0.0, 0.0]).unwrap(), 1.0);
        let r = check_log_monotonicity(&s, &region, 500, 5).unwrap();
        assert!((r.fitted_a - 1.0).abs() < 1e-10);
        assert!((r.max_ratio - 1.0).abs() < 1e-10);
    }
}
