//! Scenario files: a versioned JSON description of a sweeping problem.

mod output;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use output::{write_csv, write_metadata, TrajectoryMetadata};

use crate::error::{Error, Result};
use crate::geometry::{ImplicitSubmanifold, Point, Space};
use crate::sets::{Ball, BallComplement, HalfSpace, Inequalities, MovingSet, SetSettings, SphereCap};
use crate::sweep::{admissible_step, Perturbation, Problem, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;

/// Nodes used when a scenario does not set `step`.
const DEFAULT_STEPS: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub manifold: ManifoldSpec,
    pub set: SetSpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    pub horizon: f64,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    pub constants: Constants,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Euclidean {
        dim: usize,
    },
    Sphere {
        dim: usize,
    },
    Hyperbolic {
        dim: usize,
    },
    /// `{x ∈ R^n : h_j(x) = 0}` over `x1..xn`.
    Implicit {
        ambient_dim: usize,
        equalities: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// `⟨a, x⟩ ≥ offset + speed·t`.
    HalfSpace { normal: Vec<f64>, offset: f64, speed: f64 },
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        velocity: Option<Vec<f64>>,
    },
    BallComplement {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        velocity: Option<Vec<f64>>,
    },
    /// `⟨x, a(t)⟩ ≥ height` with `a` rotating at `omega`.
    SphereCap {
        axis: Vec<f64>,
        height: f64,
        omega: f64,
        #[serde(default)]
        rotate_toward: Option<Vec<f64>>,
    },
    /// `g_i(x1..xn, t) ≥ 0`.
    Inequalities { constraints: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    #[default]
    Zero,
    /// Ambient components over `x1..xn, t`, projected onto the tangent space.
    Field {
        components: Vec<String>,
        sup_norm: f64,
        lipschitz: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// `K_L`.
    pub set_lipschitz: f64,
    /// `η`.
    pub prox_radius: f64,
    #[serde(default)]
    pub uniqueness_radius: Option<f64>,
}

/// A validated scenario with its compiled problem.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub problem: Problem,
    hash: String,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_spec(spec)
    }

    pub fn from_spec(spec: ScenarioSpec) -> Result<Self> {
        check_numbers(&spec)?;
        let space = build_space(&spec)?;
        let x0 = space
            .point(spec.x0.clone())
            .map_err(|e| Error::validation("x₀ ∈ M", e.to_string()))?;
        let set = build_set(&spec, &space)?;
        if let Some(analytic) = set.analytic_lipschitz() {
            if spec.constants.set_lipschitz < analytic * (1.0 - 1e-12) {
                return Err(Error::validation(
                    "K_L ≥ analytic modulus",
                    format!(
                        "declared set_lipschitz {} is below the analytic value {analytic}",
                        spec.constants.set_lipschitz
                    ),
                ));
            }
        }
        let values = set.constraint_values(0.0, &x0);
        let member_tol = spec.tolerances.feasibility;
        if let Some((k, g)) = values
            .iter()
            .enumerate()
            .filter(|(_, g)| **g < -member_tol)
            .min_by(|a, b| a.1.total_cmp(b.1))
        {
            return Err(Error::validation(
                "x₀ ∈ C(0)",
                format!("constraint {k} is violated by {:e}", -g),
            ));
        }
        let field = match &spec.perturbation {
            PerturbationSpec::Zero => Perturbation::zero(),
            PerturbationSpec::Field {
                components,
                sup_norm,
                lipschitz,
            } => Perturbation::from_expressions(&space, components, &spec.params, *sup_norm, *lipschitz)?,
        };
        let mut problem = Problem::new(set, field, spec.horizon, x0)?;
        problem.tolerances = spec.tolerances;
        let hash = hash_spec(&spec)?;
        Ok(Self { spec, problem, hash })
    }

    /// SHA-256 of the normalized JSON.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// The spec with defaults filled in, as pretty-printed JSON.
    pub fn normalized_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.spec).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.normalized_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// The scenario step, or `T/1000` capped by the admissible step.
    pub fn step(&self) -> Result<f64> {
        match self.spec.step {
            Some(h) => Ok(h),
            None => Ok((self.spec.horizon / DEFAULT_STEPS).min(admissible_step(&self.problem)?.h_max)),
        }
    }

    pub fn x0(&self) -> &Point {
        &self.problem.x0
    }
}

fn hash_spec(spec: &ScenarioSpec) -> Result<String> {
    let text = serde_json::to_string(spec).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

fn check_numbers(spec: &ScenarioSpec) -> Result<()> {
    if spec.schema != SCHEMA_VERSION {
        return Err(Error::validation(
            "schema version",
            format!("expected schema {SCHEMA_VERSION}, found {}", spec.schema),
        ));
    }
    if !(spec.horizon.is_finite() && spec.horizon > 0.0) {
        return Err(Error::validation("horizon > 0", format!("horizon is {}", spec.horizon)));
    }
    if let Some(h) = spec.step {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::validation("step > 0", format!("step is {h}")));
        }
    }
    let c = &spec.constants;
    let mut declared = vec![("set_lipschitz", c.set_lipschitz), ("prox_radius", c.prox_radius)];
    if let Some(l) = c.uniqueness_radius {
        declared.push(("uniqueness_radius", l));
    }
    if let PerturbationSpec::Field {
        sup_norm, lipschitz, ..
    } = &spec.perturbation
    {
        declared.push(("perturbation.sup_norm", *sup_norm));
        declared.push(("perturbation.lipschitz", *lipschitz));
    }
    for (name, v) in declared {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::validation("constants ≥ 0", format!("{name} is {v}")));
        }
    }
    if c.prox_radius == 0.0 {
        return Err(Error::validation("constants ≥ 0", "prox_radius must be positive"));
    }
    let t = &spec.tolerances;
    for (name, v) in [
        ("feasibility", t.feasibility),
        ("projector", t.projector),
        ("projector_step", t.projector_step),
        ("uniqueness", t.uniqueness),
        ("velocity_margin", t.velocity_margin),
        ("residual", t.residual),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::validation("tolerances ≥ 0", format!("{name} is {v}")));
        }
    }
    Ok(())
}

fn build_space(spec: &ScenarioSpec) -> Result<Space> {
    let space = match &spec.manifold {
        ManifoldSpec::Euclidean { dim } => Space::euclidean(*dim),
        ManifoldSpec::Sphere { dim } => Space::sphere(*dim),
        ManifoldSpec::Hyperbolic { dim } => Space::hyperbolic(*dim),
        ManifoldSpec::Implicit {
            ambient_dim,
            equalities,
        } => {
            let m = ImplicitSubmanifold::new(*ambient_dim, equalities, &spec.params)?;
            if spec.x0.len() != *ambient_dim {
                return Err(Error::validation(
                    "x₀ ∈ M",
                    format!("x₀ has {} coordinates, expected {ambient_dim}", spec.x0.len()),
                ));
            }
            let reach = reach(spec);
            Space::new(m.calibrated(&spec.x0.clone().into(), reach))
        }
    };
    Ok(space)
}

/// Radius around `x₀` covering the trajectory and its `η`-neighbourhood.
fn reach(spec: &ScenarioSpec) -> f64 {
    let f = match &spec.perturbation {
        PerturbationSpec::Zero => 0.0,
        PerturbationSpec::Field { sup_norm, .. } => *sup_norm,
    };
    (2.0 * f + spec.constants.set_lipschitz) * spec.horizon + spec.constants.prox_radius
}

fn build_set(spec: &ScenarioSpec, space: &Space) -> Result<Arc<dyn MovingSet>> {
    let c = &spec.constants;
    let settings = SetSettings {
        lipschitz: c.set_lipschitz,
        prox_radius: c.prox_radius,
        uniqueness_radius: c.uniqueness_radius,
        member_tol: spec.tolerances.feasibility,
        solver: crate::sets::SolverOptions {
            max_iter: spec.tolerances.projector_max_iter,
            kkt_tol: spec.tolerances.projector,
            step_tol: spec.tolerances.projector_step,
        },
    };
    let center_and_velocity = |center: &[f64], velocity: &Option<Vec<f64>>| -> Result<_> {
        let c = space.point(center.to_vec())?;
        let v = match velocity {
            Some(v) => Some(space.tangent(&c, v.clone())?),
            None => None,
        };
        Ok((c, v))
    };
    let set: Arc<dyn MovingSet> = match &spec.set {
        SetSpec::HalfSpace { normal, offset, speed } => {
            Arc::new(HalfSpace::new(space, normal.clone(), *offset, *speed)?.with_settings(settings))
        }
        SetSpec::Ball {
            center,
            radius,
            velocity,
        } => {
            let (c, v) = center_and_velocity(center, velocity)?;
            Arc::new(Ball::new(space, c, *radius, v)?.with_settings(settings))
        }
        SetSpec::BallComplement {
            center,
            radius,
            velocity,
        } => {
            let (c, v) = center_and_velocity(center, velocity)?;
            Arc::new(BallComplement::new(space, c, *radius, v)?.with_settings(settings))
        }
        SetSpec::SphereCap {
            axis,
            height,
            omega,
            rotate_toward,
        } => Arc::new(
            SphereCap::new(space, axis.clone(), *height, *omega, rotate_toward.clone())?.with_settings(settings),
        ),
        SetSpec::Inequalities { constraints } => {
            Arc::new(Inequalities::new(space, constraints, &spec.params)?.with_settings(settings))
        }
    };
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALFLINE: &str = r#"{
        "schema": 1,
        "name": "halfline",
        "manifold": {"kind": "euclidean", "dim": 1},
        "set": {"kind": "half_space", "normal": [1.0], "offset": 0.0, "speed": 1.0},
        "horizon": 1.0,
        "x0": [0.0],
        "constants": {"set_lipschitz": 1.0, "prox_radius": 1.0}
    }"#;

    #[test]
    fn minimal_file_fills_defaults() {
        let s = Scenario::from_json(HALFLINE).unwrap();
        assert_eq!(s.problem.set.settings().lipschitz, 1.0);
        assert!(s.problem.field.is_zero());
        assert_eq!(s.spec.tolerances, Tolerances::default());
        assert_eq!(s.step().unwrap(), 1e-3);
    }

    #[test]
    fn normalized_round_trip_is_hash_stable() {
        let s = Scenario::from_json(HALFLINE).unwrap();
        let again = Scenario::from_json(&s.normalized_json().unwrap()).unwrap();
        assert_eq!(again.spec, s.spec);
        assert_eq!(again.hash(), s.hash());
    }

    #[test]
    fn infeasible_start_names_the_invariant() {
        let text = HALFLINE.replace("\"x0\": [0.0]", "\"x0\": [-0.5]");
        match Scenario::from_json(&text) {
            Err(Error::Validation { invariant, detail }) => {
                assert_eq!(invariant, "x₀ ∈ C(0)");
                assert!(detail.contains("constraint 0"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = HALFLINE.replace("\"horizon\"", "\"horizn\": 2.0, \"horizon\"");
        assert!(matches!(Scenario::from_json(&text), Err(Error::Parse { line: 6, .. })));
        let text = HALFLINE.replace("\"speed\": 1.0", "\"speed\": 1.0, \"spead\": 1.0");
        assert!(matches!(Scenario::from_json(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn understated_set_lipschitz_is_rejected() {
        let text = HALFLINE.replace("\"set_lipschitz\": 1.0", "\"set_lipschitz\": 0.5");
        assert!(matches!(Scenario::from_json(&text), Err(Error::Validation { .. })));
    }
}
