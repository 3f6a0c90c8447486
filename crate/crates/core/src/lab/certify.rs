//! Pass/warn/fail certification of a scenario run.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::Ball;
use crate::proxreg::{probe_projection_uniqueness, sample_hypomonotonicity, UniquenessOptions};
use crate::scenario::Scenario;
use crate::sweep::{catching_up, inclusion_residual, Problem, ResidualOptions, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    /// Trajectory nodes around which the set is sampled.
    pub checkpoints: usize,
    pub hypomonotonicity_samples: usize,
    pub uniqueness_points: usize,
    pub uniqueness: UniquenessOptions,
    pub residual_times: usize,
    pub residual_samples: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            checkpoints: 4,
            hypomonotonicity_samples: 400,
            uniqueness_points: 12,
            uniqueness: UniquenessOptions::default(),
            residual_times: 100,
            residual_samples: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionCheck {
    pub t: f64,
    pub center: Vec<f64>,
    pub radius: f64,
    pub fitted_e: Option<f64>,
    pub empirical_ell: Option<f64>,
    pub unbounded_ell: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VelocityCheck {
    pub max: f64,
    pub bound: f64,
    pub margin: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub h: f64,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
    pub fitted_e: Option<f64>,
    pub empirical_ell: Option<f64>,
    pub declared_ell: f64,
    pub max_query_distance: Option<f64>,
    pub velocity: Option<VelocityCheck>,
    pub max_residual: Option<f64>,
    pub residual_tolerance: f64,
    pub inconclusive_residuals: usize,
    pub regions: Vec<RegionCheck>,
    pub run_error: Option<String>,
}

impl CertificationReport {
    fn raise(&mut self, verdict: Verdict, reason: String) {
        self.verdict = self.verdict.max(verdict);
        self.reasons.push(reason);
    }
}

/// Certify a scenario at its own step and seed.
pub fn certify_scenario(scenario: &Scenario, opts: &CertifyOptions) -> CertificationReport {
    let h = scenario.step();
    let mut report = certify(
        &scenario.problem,
        h.as_ref().copied().unwrap_or(f64::NAN),
        scenario.spec.seed,
        opts,
    );
    report.scenario = scenario.spec.name.clone();
    report.scenario_hash = scenario.hash().to_string();
    if let Err(e) = h {
        report.raise(Verdict::Fail, format!("no admissible step: {e}"));
    }
    report
}

/// Run the scheme at step `h` and check the visited region: hypomonotonicity,
/// projection uniqueness, the velocity bound and the inclusion residual.
pub fn certify(problem: &Problem, h: f64, seed: u64, opts: &CertifyOptions) -> CertificationReport {
    let settings = problem.set.settings();
    let mut report = CertificationReport {
        scenario: String::new(),
        scenario_hash: String::new(),
        seed,
        h,
        verdict: Verdict::Pass,
        reasons: Vec::new(),
        fitted_e: None,
        empirical_ell: None,
        declared_ell: settings.uniqueness_radius(),
        max_query_distance: None,
        velocity: None,
        max_residual: None,
        residual_tolerance: problem.tolerances.residual,
        inconclusive_residuals: 0,
        regions: Vec::new(),
        run_error: None,
    };
    let traj = match catching_up(problem, h) {
        Ok(t) => t,
        Err(e) => {
            report.run_error = Some(e.to_string());
            report.raise(Verdict::Fail, format!("integration failed: {e}"));
            return report;
        }
    };
    let stats = &traj.stats;
    report.max_query_distance = Some(stats.max_query_distance);
    report.velocity = Some(VelocityCheck {
        max: stats.max_velocity,
        bound: stats.velocity_bound,
        margin: problem.tolerances.velocity_margin,
        ok: stats.velocity_bound_ok,
    });
    if !stats.velocity_bound_ok {
        report.raise(
            Verdict::Fail,
            format!(
                "discrete velocity {} exceeds 2|f| + K_L = {}",
                stats.max_velocity, stats.velocity_bound
            ),
        );
    }
    if !stats.step_admissible {
        report.raise(
            Verdict::Warn,
            format!("step {h} exceeds the admissible step {}", stats.admissible_step),
        );
    }
    if stats.flagged_steps > 0 {
        report.raise(
            Verdict::Warn,
            format!(
                "{} steps projected from beyond the declared uniqueness radius",
                stats.flagged_steps
            ),
        );
    }
    if stats.field_bound_exceedances > 0 {
        report.raise(
            Verdict::Warn,
            format!(
                "{} field evaluations exceeded the declared sup norm",
                stats.field_bound_exceedances
            ),
        );
    }

    report.regions = check_regions(problem, &traj, seed, opts);
    let fitted: Vec<f64> = report.regions.iter().filter_map(|r| r.fitted_e).collect();
    report.fitted_e = fitted.iter().copied().reduce(f64::max);
    if report.fitted_e.is_none() {
        report.raise(Verdict::Warn, "no boundary samples near the trajectory".to_string());
    }
    let ells: Vec<f64> = report
        .regions
        .iter()
        .filter(|r| !r.unbounded_ell)
        .filter_map(|r| r.empirical_ell)
        .collect();
    report.empirical_ell = ells.iter().copied().reduce(f64::min);
    if let Some(ell) = report.empirical_ell {
        if stats.max_query_distance > 0.5 * ell {
            report.raise(
                Verdict::Warn,
                format!(
                    "projection queries reach distance {:.6}, beyond half the empirical uniqueness radius {ell:.6}",
                    stats.max_query_distance
                ),
            );
        }
        if ell < report.declared_ell {
            report.raise(
                Verdict::Warn,
                format!(
                    "empirical uniqueness radius {ell:.6} is below the declared {}",
                    report.declared_ell
                ),
            );
        }
    }

    let residual_opts = ResidualOptions {
        e_hat: report.fitted_e.unwrap_or(0.0),
        samples: opts.residual_samples,
        seed,
        ..ResidualOptions::default()
    };
    let n = opts.residual_times.max(1);
    let samples: Vec<Result<_>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let t = problem.horizon * (j as f64 + 0.5) / n as f64;
            inclusion_residual(problem, &traj, t, &residual_opts)
        })
        .collect();
    let mut max_residual: f64 = 0.0;
    for s in samples {
        match s {
            Ok(s) if s.inconclusive => report.inconclusive_residuals += 1,
            Ok(s) => max_residual = max_residual.max(s.residual),
            Err(e) => {
                report.raise(Verdict::Warn, format!("residual evaluation failed: {e}"));
                break;
            }
        }
    }
    report.max_residual = Some(max_residual);
    if max_residual > problem.tolerances.residual {
        report.raise(
            Verdict::Warn,
            format!(
                "inclusion residual {max_residual:.6} exceeds the tolerance {}",
                problem.tolerances.residual
            ),
        );
    }
    if report.inconclusive_residuals > 0 {
        report.raise(
            Verdict::Warn,
            format!(
                "{} residual samples found no nearby members",
                report.inconclusive_residuals
            ),
        );
    }
    report
}

/// Checkpoints spread over the run, preferring nodes where the constraint
/// is active.
fn checkpoints(traj: &Trajectory, k: usize) -> Vec<usize> {
    let active: Vec<usize> = (0..traj.len()).filter(|&i| !traj.active_sets[i].is_empty()).collect();
    let pool: Vec<usize> = if active.is_empty() {
        (0..traj.len()).collect()
    } else {
        active
    };
    let k = k.max(1).min(pool.len());
    let mut picks: Vec<usize> = (0..k)
        .map(|j| pool[if k == 1 { 0 } else { j * (pool.len() - 1) / (k - 1) }])
        .collect();
    picks.dedup();
    picks
}

fn check_regions(problem: &Problem, traj: &Trajectory, seed: u64, opts: &CertifyOptions) -> Vec<RegionCheck> {
    let settings = problem.set.settings();
    let radius = (0.5 * settings.prox_radius).min(0.45 * traj.stats.rho);
    let ell_cap = 2.0 * settings.uniqueness_radius();
    let uniq = UniquenessOptions {
        levels: opts
            .uniqueness
            .levels
            .iter()
            .copied()
            .filter(|&s| s <= ell_cap)
            .collect(),
        ..opts.uniqueness.clone()
    };
    checkpoints(traj, opts.checkpoints)
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            let t = traj.times[i];
            let region = Ball::new(traj.nodes[i].clone(), radius);
            let mut check = RegionCheck {
                t,
                center: traj.nodes[i].to_vec(),
                radius,
                fitted_e: None,
                empirical_ell: None,
                unbounded_ell: false,
                note: None,
            };
            let region_seed = seed.wrapping_add(k as u64 * 0x9e37_79b9);
            match sample_hypomonotonicity(
                problem.set.as_ref(),
                t,
                &region,
                opts.hypomonotonicity_samples,
                None,
                region_seed,
            ) {
                Ok(r) => check.fitted_e = Some(r.fitted_e),
                Err(e) => check.note = Some(format!("hypomonotonicity: {e}")),
            }
            match probe_projection_uniqueness(
                problem.set.as_ref(),
                t,
                &region,
                opts.uniqueness_points,
                region_seed,
                &uniq,
            ) {
                Ok(r) => {
                    check.empirical_ell = Some(r.empirical_ell);
                    check.unbounded_ell = r.unbounded_in_range;
                }
                Err(e) => check.note = Some(format!("uniqueness: {e}")),
            }
            check
        })
        .collect()
}
