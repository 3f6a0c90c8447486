//! Self-refinement and analytic-oracle convergence studies.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::{PerturbationSpec, Scenario, SetSpec};
use crate::sweep::{catching_up, interpolate, Problem, Trajectory};

/// Uniform sample times at which interpolants are compared.
pub const SAMPLE_TIMES: usize = 256;
/// The finest-step reference uses `min(steps) / REFERENCE_REFINEMENT`.
pub const REFERENCE_REFINEMENT: f64 = 8.0;
/// Errors at or below this are integrator noise.
pub const SATURATION: f64 = 1e-11;
/// Weak monotonicity allows each error to exceed the previous one by 10%.
pub const NOISE_BAND: f64 = 1.1;
const MIN_LEVELS: usize = 4;
const KNEE_TOL: f64 = 0.25;

type ExactFn = dyn Fn(f64) -> Result<Point> + Send + Sync;

#[derive(Clone)]
pub enum Reference {
    Analytic { name: String, exact: Arc<ExactFn> },
    Finest,
}

impl fmt::Debug for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Analytic { name, .. } => write!(f, "Analytic({name})"),
            Reference::Finest => write!(f, "Finest"),
        }
    }
}

impl Reference {
    pub fn analytic<F>(name: impl Into<String>, exact: F) -> Self
    where
        F: Fn(f64) -> Result<Point> + Send + Sync + 'static,
    {
        Reference::Analytic {
            name: name.into(),
            exact: Arc::new(exact),
        }
    }

    /// The closed-form solution when the scenario has one: an unperturbed
    /// one-dimensional half-line `x ≥ offset + speed·t`, solved by
    /// `x(t) = max(x₀, max_{s≤t} g(s))`.
    pub fn for_scenario(scenario: &Scenario) -> Option<Self> {
        let spec = &scenario.spec;
        let SetSpec::HalfSpace { normal, offset, speed } = &spec.set else {
            return None;
        };
        if normal.len() != 1 || spec.perturbation != PerturbationSpec::Zero {
            return None;
        }
        let a = normal[0];
        if a == 0.0 {
            return None;
        }
        let (offset, speed, sign) = (offset / a.abs(), speed / a.abs(), a.signum());
        let y0 = sign * spec.x0[0];
        let space = scenario.problem.space.clone();
        Some(Self::analytic("halfline", move |t| {
            space.point([sign * y0.max(offset + speed.max(0.0) * t)])
        }))
    }

    fn label(&self) -> String {
        match self {
            Reference::Analytic { name, .. } => format!("analytic:{name}"),
            Reference::Finest => "finest".to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RateStudy {
    pub scenario_hash: Option<String>,
    pub reference: String,
    pub reference_step: Option<f64>,
    pub sample_times: usize,
    /// Decreasing.
    pub steps: Vec<f64>,
    /// Sup over the sample times of the distance to the reference.
    pub errors: Vec<f64>,
    pub fitted_order: Option<f64>,
    /// Prefactor `C` in `error ≈ C hᵖ`.
    pub constant: Option<f64>,
    /// `max error / √h`.
    pub sqrt_constant: f64,
    /// Levels used for the fit, as indices into `steps`.
    pub fit_levels: Vec<usize>,
    pub knee_excluded: bool,
    pub saturated: bool,
    pub monotone: bool,
}

impl RateStudy {
    /// Plain-text table with one row per level.
    pub fn table(&self) -> String {
        let mut s = format!(
            "reference: {}\n{:>14} {:>14} {:>8}\n",
            self.reference, "h", "error", "order"
        );
        for (k, (h, e)) in self.steps.iter().zip(&self.errors).enumerate() {
            let order = if k == 0 {
                "-".to_string()
            } else {
                format!("{:.3}", local_order(self.steps[k - 1], self.errors[k - 1], *h, *e))
            };
            s.push_str(&format!("{h:>14.6e} {e:>14.6e} {order:>8}\n"));
        }
        match self.fitted_order {
            Some(p) => s.push_str(&format!(
                "fitted order {p:.4}, constant {:.4e}{}\n",
                self.constant.unwrap_or(f64::NAN),
                if self.knee_excluded {
                    " (two coarsest levels excluded)"
                } else {
                    ""
                }
            )),
            None if self.saturated => s.push_str("errors at integrator tolerance; order saturated\n"),
            None => s.push_str("too few levels for an order fit\n"),
        }
        s
    }

    /// `h error` lines for plotting.
    pub fn gnuplot(&self) -> String {
        let mut s = String::from("# h error\n");
        for (h, e) in self.steps.iter().zip(&self.errors) {
            s.push_str(&format!("{h:e} {e:e}\n"));
        }
        s
    }
}

/// A failed study with the levels completed before the failure.
#[derive(Debug)]
pub struct RateStudyError {
    pub partial: Box<RateStudy>,
    pub source: Error,
}

impl fmt::Display for RateStudyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rate study aborted: {}", self.source)
    }
}

impl std::error::Error for RateStudyError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<RateStudyError> for Error {
    fn from(e: RateStudyError) -> Self {
        e.source
    }
}

/// Run the scheme at every step in `steps` (strictly decreasing) and
/// measure the sup-distance to `reference` at uniform sample times.
pub fn run_rate_study(problem: &Problem, steps: &[f64], reference: &Reference) -> Result<RateStudy, RateStudyError> {
    let mut study = RateStudy {
        scenario_hash: None,
        reference: reference.label(),
        reference_step: None,
        sample_times: SAMPLE_TIMES,
        steps: Vec::new(),
        errors: Vec::new(),
        fitted_order: None,
        constant: None,
        sqrt_constant: 0.0,
        fit_levels: Vec::new(),
        knee_excluded: false,
        saturated: false,
        monotone: true,
    };
    let abort = |study: RateStudy, source: Error| RateStudyError {
        partial: Box::new(study),
        source,
    };
    if steps.len() < MIN_LEVELS {
        return Err(abort(
            study,
            Error::domain(format!("a rate study needs at least {MIN_LEVELS} step levels")),
        ));
    }
    let decreasing = steps.windows(2).all(|w| w[1] < w[0]);
    if !decreasing || !steps.iter().all(|h| *h > 0.0) {
        return Err(abort(
            study,
            Error::domain("steps must be positive and strictly decreasing"),
        ));
    }
    let horizon = problem.horizon;
    let times: Vec<f64> = (0..SAMPLE_TIMES)
        .map(|j| horizon * j as f64 / (SAMPLE_TIMES - 1) as f64)
        .collect();
    let exact: Vec<Point> = match reference {
        Reference::Analytic { exact, .. } => match times.iter().map(|&t| exact(t)).collect() {
            Ok(v) => v,
            Err(e) => return Err(abort(study, e)),
        },
        Reference::Finest => {
            let h_ref = steps[steps.len() - 1] / REFERENCE_REFINEMENT;
            study.reference_step = Some(h_ref);
            match catching_up(problem, h_ref)
                .map_err(Error::from)
                .and_then(|tr| sample(&tr, &times))
            {
                Ok(v) => v,
                Err(e) => return Err(abort(study, e)),
            }
        }
    };
    let runs: Vec<Result<f64>> = steps
        .par_iter()
        .map(|&h| {
            let tr = catching_up(problem, h)?;
            let pts = sample(&tr, &times)?;
            pts.iter()
                .zip(&exact)
                .try_fold(0.0f64, |acc, (a, b)| Ok(acc.max(problem.space.distance(a, b)?)))
        })
        .collect();
    for (&h, run) in steps.iter().zip(runs) {
        match run {
            Ok(e) => {
                study.steps.push(h);
                study.errors.push(e);
            }
            Err(e) => return Err(abort(study, e)),
        }
    }
    fit(&mut study);
    Ok(study)
}

fn sample(traj: &Trajectory, times: &[f64]) -> Result<Vec<Point>> {
    times.iter().map(|&t| interpolate(traj, t)).collect()
}

fn local_order(h0: f64, e0: f64, h1: f64, e1: f64) -> f64 {
    (e0 / e1).ln() / (h0 / h1).ln()
}

fn fit(study: &mut RateStudy) {
    let (h, e) = (&study.steps, &study.errors);
    study.sqrt_constant = h.iter().zip(e).map(|(h, e)| e / h.sqrt()).fold(0.0, f64::max);
    study.monotone = e.windows(2).all(|w| w[1] <= NOISE_BAND * w[0]);
    let live: Vec<usize> = (0..e.len()).filter(|&k| e[k] > SATURATION).collect();
    if live.is_empty() {
        study.saturated = true;
        return;
    }
    let mut levels = live;
    if levels.len() >= MIN_LEVELS + 2 {
        let orders: Vec<f64> = levels
            .windows(2)
            .map(|w| local_order(h[w[0]], e[w[0]], h[w[1]], e[w[1]]))
            .collect();
        let mut tail = orders[2..].to_vec();
        tail.sort_by(f64::total_cmp);
        let median = tail[tail.len() / 2];
        let settled = tail[tail.len() - 1] - tail[0] <= 2.0 * KNEE_TOL;
        if settled && ((orders[0] - median).abs() > KNEE_TOL || (orders[1] - median).abs() > KNEE_TOL) {
            levels.drain(..2);
            study.knee_excluded = true;
        }
    }
    if levels.len() < MIN_LEVELS {
        return;
    }
    let pts: Vec<(f64, f64)> = levels.iter().map(|&k| (h[k].ln(), e[k].ln())).collect();
    let (slope, intercept) = least_squares(&pts);
    study.fitted_order = Some(slope);
    study.constant = Some(intercept.exp());
    study.fit_levels = levels;
}

/// Slope and intercept of the least-squares line through `pts`.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(steps: &[f64], errors: &[f64]) -> RateStudy {
        let mut s = RateStudy {
            scenario_hash: None,
            reference: "test".into(),
            reference_step: None,
            sample_times: SAMPLE_TIMES,
            steps: steps.to_vec(),
            errors: errors.to_vec(),
            fitted_order: None,
            constant: None,
            sqrt_constant: 0.0,
            fit_levels: vec![],
            knee_excluded: false,
            saturated: false,
            monotone: true,
        };
        fit(&mut s);
        s
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let h: Vec<f64> = (1..=5).map(|k| 0.5f64.powi(k)).collect();
        let e: Vec<f64> = h.iter().map(|h| 3.0 * h.powf(0.75)).collect();
        let s = synthetic(&h, &e);
        assert!((s.fitted_order.unwrap() - 0.75).abs() < 1e-12);
        assert!((s.constant.unwrap() - 3.0).abs() < 1e-12);
        assert!(!s.knee_excluded);
    }

    #[test]
    fn knee_drops_two_coarsest_levels() {
        let h: Vec<f64> = (1..=7).map(|k| 0.5f64.powi(k)).collect();
        let mut e: Vec<f64> = h.iter().map(|h| h * 2.0).collect();
        e[0] = 5.0;
        e[1] = 1.0;
        let s = synthetic(&h, &e);
        assert!(s.knee_excluded);
        assert_eq!(s.fit_levels, vec![2, 3, 4, 5, 6]);
        assert!((s.fitted_order.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_errors_saturate() {
        let s = synthetic(&[0.4, 0.2, 0.1, 0.05], &[1e-15, 2e-15, 0.0, 1e-16]);
        assert!(s.saturated);
        assert!(s.fitted_order.is_none());
    }

    #[test]
    fn three_levels_are_not_fitted() {
        assert!(synthetic(&[0.4, 0.2, 0.1], &[0.4, 0.2, 0.1]).fitted_order.is_none());
    }
}
