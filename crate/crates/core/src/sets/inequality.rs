//! Sets described by expression-valued inequalities `g_i(t, x) ≥ 0`.

use std::collections::BTreeMap;

use super::{MovingSet, SetSettings};
use crate::error::{Error, Result};
use crate::expr::{Expr, VarLayout};
use crate::geometry::{Point, Space, Tangent, Vector};

#[derive(Clone, Debug)]
pub struct Inequalities {
    space: Space,
    constraints: Vec<Expr>,
    settings: SetSettings,
}

impl Inequalities {
    /// Compile constraints over `x1..xn` and `t`, with `n` the ambient dimension.
    pub fn new(space: &Space, constraints: &[String], params: &BTreeMap<String, f64>) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::structural("inequality set needs at least one constraint"));
        }
        let layout = VarLayout::coords_and_time(space.ambient_dim());
        let constraints = constraints
            .iter()
            .map(|s| Expr::compile(s, layout, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            space: space.clone(),
            constraints,
            settings: SetSettings::default(),
        })
    }

    fn inputs(t: f64, x: &Point) -> Vec<f64> {
        let mut v = x.to_vec();
        v.push(t);
        v
    }
}

impl MovingSet for Inequalities {
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
        self.constraints.len()
    }

    fn constraint_values(&self, t: f64, x: &Point) -> Vec<f64> {
        let inputs = Self::inputs(t, x);
        self.constraints.iter().map(|g| g.value(&inputs)).collect()
    }

    fn constraint_gradients(&self, t: f64, x: &Point) -> Result<Vec<Tangent>> {
        let inputs = Self::inputs(t, x);
        let n = self.space.ambient_dim();
        self.constraints
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let full = g.gradient(&inputs);
                let grad = Vector::from_iterator(n, full.into_iter().take(n));
                if grad.iter().any(|v| !v.is_finite()) {
                    return Err(Error::numeric(
                        format!("gradient of constraint {i} is not finite"),
                        f64::NAN,
                    ));
                }
                Ok(self.space.riemannian_gradient(x, &grad))
            })
            .collect()
    }

    fn describe(&self) -> String {
        let srcs: Vec<&str> = self.constraints.iter().map(|c| c.source()).collect();
        format!("inequalities [{}] >= 0", srcs.join(", "))
    }
}
