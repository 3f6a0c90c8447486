//! Prox-regularity diagnostics along a scenario run.

use serde::Serialize;

use crate::geometry::Ball;
use crate::proxreg::{
    boundary_in, check_log_monotonicity, probe_projection_uniqueness, sample_hypomonotonicity, stream,
    test_cone_membership, unit_normal, ConeMembershipReport, HypomonotonicityReport, LogMonotonicityReport,
    UniquenessOptions, UniquenessReport,
};
use crate::scenario::Scenario;
use crate::sweep::catching_up;

#[derive(Clone, Debug)]
pub struct DiagnoseOptions {
    /// Evenly spaced times in `[0, T]` at which the set is probed.
    pub times: usize,
    pub hypomonotonicity_samples: usize,
    pub uniqueness_points: usize,
    pub uniqueness: UniquenessOptions,
    pub log_samples: usize,
    pub cone_samples: usize,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            times: 3,
            hypomonotonicity_samples: 400,
            uniqueness_points: 12,
            uniqueness: UniquenessOptions::default(),
            log_samples: 500,
            cone_samples: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionDiagnostics {
    pub t: f64,
    pub center: Vec<f64>,
    pub radius: f64,
    pub hypomonotonicity: Option<HypomonotonicityReport>,
    pub uniqueness: Option<UniquenessReport>,
    /// Cone test of a sampled boundary point against one of its normals.
    pub cone: Option<ConeMembershipReport>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub h: Option<f64>,
    pub log_monotonicity: Option<LogMonotonicityReport>,
    pub regions: Vec<RegionDiagnostics>,
    pub errors: Vec<String>,
}

/// Probe hypomonotonicity, projection uniqueness and cone membership around
/// trajectory nodes, and log-map monotonicity around the initial point.
/// Failures of individual probes are recorded rather than propagated.
pub fn diagnose_scenario(scenario: &Scenario, opts: &DiagnoseOptions) -> DiagnosticsReport {
    let problem = &scenario.problem;
    let seed = scenario.spec.seed;
    let settings = problem.set.settings();
    let mut report = DiagnosticsReport {
        scenario: scenario.spec.name.clone(),
        scenario_hash: scenario.hash().to_string(),
        seed,
        h: None,
        log_monotonicity: None,
        regions: Vec::new(),
        errors: Vec::new(),
    };
    let traj = match scenario.step().and_then(|h| {
        report.h = Some(h);
        catching_up(problem, h).map_err(Into::into)
    }) {
        Ok(t) => Some(t),
        Err(e) => {
            report.errors.push(format!("trajectory: {e}"));
            None
        }
    };
    let rho = traj
        .as_ref()
        .map(|t| t.stats.rho)
        .unwrap_or_else(|| problem.space.default_radius());
    let radius = (0.5 * settings.prox_radius).min(0.45 * rho);

    let log_region = Ball::new(problem.x0.clone(), radius.min(0.45 * problem.space.default_radius()));
    match check_log_monotonicity(&problem.space, &log_region, opts.log_samples, seed) {
        Ok(r) => report.log_monotonicity = Some(r),
        Err(e) => report.errors.push(format!("log monotonicity: {e}")),
    }

    let n = opts.times.max(1);
    for j in 0..n {
        let t = if n == 1 {
            0.0
        } else {
            problem.horizon * j as f64 / (n - 1) as f64
        };
        let center = match &traj {
            Some(traj) => {
                let i = traj.times.partition_point(|&s| s < t).min(traj.len() - 1);
                traj.nodes[i].clone()
            }
            None if j == 0 => problem.x0.clone(),
            None => break,
        };
        let region = Ball::new(center.clone(), radius);
        let region_seed = seed.wrapping_add(j as u64 * 0x9e37_79b9);
        let mut entry = RegionDiagnostics {
            t,
            center: center.to_vec(),
            radius,
            hypomonotonicity: None,
            uniqueness: None,
            cone: None,
            errors: Vec::new(),
        };
        let set = problem.set.as_ref();
        match sample_hypomonotonicity(set, t, &region, opts.hypomonotonicity_samples, None, region_seed) {
            Ok(r) => entry.hypomonotonicity = Some(r),
            Err(e) => entry.errors.push(format!("hypomonotonicity: {e}")),
        }
        match probe_projection_uniqueness(set, t, &region, opts.uniqueness_points, region_seed, &opts.uniqueness) {
            Ok(r) => entry.uniqueness = Some(r),
            Err(e) => entry.errors.push(format!("uniqueness: {e}")),
        }
        let mut rng = stream(region_seed, u64::MAX);
        let anchor =
            boundary_in(set, t, &region, &mut rng).and_then(|x| Ok(unit_normal(set, t, &x, &mut rng)?.map(|v| (x, v))));
        match anchor {
            Ok(Some((x, v))) => match test_cone_membership(set, t, &x, &v, opts.cone_samples, region_seed) {
                Ok(r) => entry.cone = Some(r),
                Err(e) => entry.errors.push(format!("cone: {e}")),
            },
            Ok(None) => entry
                .errors
                .push("cone: no normal at the sampled boundary point".to_string()),
            Err(e) => entry.errors.push(format!("cone: {e}")),
        }
        report.regions.push(entry);
    }
    report
}
