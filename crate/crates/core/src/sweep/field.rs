//! Perturbation fields `f(t, x) ∈ T_x M`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Expr, VarLayout};
use crate::geometry::{Point, Space, Tangent, Vector};

type FieldFn = dyn Fn(f64, &Point) -> Vector + Send + Sync;

#[derive(Clone)]
enum FieldKind {
    Zero,
    /// Ambient components over `x1..xn, t`, projected onto `T_x M`.
    Expressions(Vec<Expr>),
    Function(Arc<FieldFn>),
}

/// A bounded, Lipschitz tangent field with its declared constants.
#[derive(Clone)]
pub struct Perturbation {
    kind: FieldKind,
    /// Declared `‖f‖∞`.
    pub sup_norm: f64,
    /// Declared Lipschitz constant in the transported sense.
    pub lipschitz: f64,
    exceedances: Arc<AtomicUsize>,
}

impl fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            FieldKind::Zero => "zero".to_string(),
            FieldKind::Expressions(e) => {
                let srcs: Vec<&str> = e.iter().map(|x| x.source()).collect();
                format!("[{}]", srcs.join(", "))
            }
            FieldKind::Function(_) => "closure".to_string(),
        };
        f.debug_struct("Perturbation")
            .field("field", &kind)
            .field("sup_norm", &self.sup_norm)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Perturbation {
    pub fn zero() -> Self {
        Self::with_kind(FieldKind::Zero, 0.0, 0.0)
    }

    pub fn from_expressions(
        space: &Space,
        components: &[String],
        params: &BTreeMap<String, f64>,
        sup_norm: f64,
        lipschitz: f64,
    ) -> Result<Self> {
        if components.len() != space.ambient_dim() {
            return Err(Error::structural(format!(
                "perturbation has {} components, the manifold has {} ambient coordinates",
                components.len(),
                space.ambient_dim()
            )));
        }
        let layout = VarLayout::coords_and_time(space.ambient_dim());
        let exprs = components
            .iter()
            .map(|c| Expr::compile(c, layout, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_kind(FieldKind::Expressions(exprs), sup_norm, lipschitz))
    }

    /// A field given by ambient components; they are projected onto `T_x M`.
    pub fn from_fn<F>(f: F, sup_norm: f64, lipschitz: f64) -> Self
    where
        F: Fn(f64, &Point) -> Vector + Send + Sync + 'static,
    {
        Self::with_kind(FieldKind::Function(Arc::new(f)), sup_norm, lipschitz)
    }

    fn with_kind(kind: FieldKind, sup_norm: f64, lipschitz: f64) -> Self {
        Self {
            kind,
            sup_norm,
            lipschitz,
            exceedances: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, FieldKind::Zero)
    }

    pub fn eval(&self, space: &Space, t: f64, x: &Point) -> Tangent {
        let ambient = match &self.kind {
            FieldKind::Zero => return space.zero(x),
            FieldKind::Expressions(exprs) => {
                let mut inputs = x.to_vec();
                inputs.push(t);
                Vector::from_iterator(exprs.len(), exprs.iter().map(|e| e.value(&inputs)))
            }
            FieldKind::Function(f) => f(t, x),
        };
        let v = space.project_tangent(x, &ambient);
        let n = space.norm(&v);
        if n > self.sup_norm * (1.0 + 1e-9) + 1e-12 && self.exceedances.fetch_add(1, Ordering::Relaxed) == 0 {
            log::warn!(
                "perturbation norm {n} exceeds the declared sup norm {} at t = {t}",
                self.sup_norm
            );
        }
        v
    }

    /// Number of evaluations whose norm exceeded the declared sup norm.
    pub fn exceedances(&self) -> usize {
        self.exceedances.load(Ordering::Relaxed)
    }
}
