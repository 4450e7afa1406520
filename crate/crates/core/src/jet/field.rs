use std::collections::HashMap;
use std::sync::Mutex;

use crate::expr::{Expr, MultiIndex};

use super::{JetContext, JetError};

/// Highest jet order allowed in a generalized characteristic.
pub const MAX_CHARACTERISTIC_ORDER: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldKind {
    /// `ξ_i(x,u) ∂/∂x_i + φ_α(x,u) ∂/∂u_α`.
    Point { xi: Vec<Expr>, phi: Vec<Expr> },
    /// `Q_α(x, u, u_x, ...) ∂/∂u_α`.
    Generalized { q: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorField {
    pub name: String,
    pub kind: FieldKind,
}

impl VectorField {
    pub fn point(name: impl Into<String>, xi: Vec<Expr>, phi: Vec<Expr>) -> Result<Self, JetError> {
        let name = name.into();
        if let Some(bad) = xi.iter().chain(&phi).find(|e| e.jet_order() > 0) {
            return Err(JetError::InvalidField {
                name,
                reason: format!("point coefficient `{bad}` depends on derivatives"),
            });
        }
        Ok(VectorField {
            name,
            kind: FieldKind::Point { xi, phi },
        })
    }

    pub fn generalized(name: impl Into<String>, q: Vec<Expr>) -> Result<Self, JetError> {
        let name = name.into();
        if let Some(bad) = q.iter().find(|e| e.jet_order() > MAX_CHARACTERISTIC_ORDER) {
            return Err(JetError::InvalidField {
                name,
                reason: format!("characteristic `{bad}` exceeds jet order {MAX_CHARACTERISTIC_ORDER}"),
            });
        }
        Ok(VectorField {
            name,
            kind: FieldKind::Generalized { q },
        })
    }

    pub fn is_point(&self) -> bool {
        matches!(self.kind, FieldKind::Point { .. })
    }

    /// `ξ`, zero for generalized fields.
    pub fn xi(&self, ctx: &JetContext) -> Vec<Expr> {
        match &self.kind {
            FieldKind::Point { xi, .. } => xi.clone(),
            FieldKind::Generalized { .. } => vec![Expr::zero(); ctx.dim()],
        }
    }

    /// The characteristic `Q_α = φ_α − ξ_i u_{α,i}`.
    pub fn characteristic(&self, ctx: &JetContext) -> Vec<Expr> {
        match &self.kind {
            FieldKind::Generalized { q } => q.clone(),
            FieldKind::Point { xi, phi } => phi
                .iter()
                .enumerate()
                .map(|(a, p)| {
                    let mut terms = vec![p.clone()];
                    for (i, x) in xi.iter().enumerate() {
                        let mi = MultiIndex::zero(ctx.dim()).raised(i);
                        terms.push(-(x * &Expr::sym(ctx.jet(a, mi))));
                    }
                    Expr::add(terms)
                })
                .collect(),
        }
    }

    /// The evolutionary representative, a generalized field.
    pub fn evolutionary_form(&self, ctx: &JetContext) -> VectorField {
        VectorField {
            name: format!("{}_ev", self.name),
            kind: FieldKind::Generalized {
                q: self.characteristic(ctx),
            },
        }
    }

    /// `a·self + b·other`, when both have the same kind.
    pub fn combine(&self, a: &Expr, other: &VectorField, b: &Expr) -> Option<VectorField> {
        let lin = |x: &[Expr], y: &[Expr]| -> Vec<Expr> { x.iter().zip(y).map(|(p, q)| &(a * p) + &(b * q)).collect() };
        let kind = match (&self.kind, &other.kind) {
            (FieldKind::Point { xi: x1, phi: p1 }, FieldKind::Point { xi: x2, phi: p2 }) => FieldKind::Point {
                xi: lin(x1, x2),
                phi: lin(p1, p2),
            },
            (FieldKind::Generalized { q: q1 }, FieldKind::Generalized { q: q2 }) => FieldKind::Generalized { q: lin(q1, q2) },
            _ => return None,
        };
        Some(VectorField {
            name: format!("{}+{}", self.name, other.name),
            kind,
        })
    }
}

/// An operator driving a symmetry chain: `X*` for fields, `R*` for maps.
pub trait ChainOperator {
    fn apply(&self, e: &Expr) -> Result<Expr, JetError>;
    fn name(&self) -> &str;
    /// Number of applications after which the operator is the identity.
    fn period(&self) -> Option<u32> {
        None
    }
}

/// The prolongation `X*` of a field, with memoized coefficients.
#[derive(Debug)]
pub struct Prolongation<'a> {
    ctx: &'a JetContext,
    field: &'a VectorField,
    xi: Vec<Expr>,
    q: Vec<Expr>,
    /// `D_J Q_α` per `(α, J)`.
    cache: Mutex<HashMap<(usize, MultiIndex), Expr>>,
}

impl<'a> Prolongation<'a> {
    pub fn new(ctx: &'a JetContext, field: &'a VectorField) -> Self {
        Prolongation {
            ctx,
            field,
            xi: field.xi(ctx),
            q: field.characteristic(ctx),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn field(&self) -> &VectorField {
        self.field
    }

    fn dq(&self, dep: usize, index: &MultiIndex) -> Expr {
        if index.is_zero() {
            return self.q[dep].clone();
        }
        if let Some(e) = self.cache.lock().unwrap_or_else(|p| p.into_inner()).get(&(dep, index.clone())) {
            return e.clone();
        }
        // peel the last variable so that prefixes get reused
        let last = *index.steps().last().expect("nonzero index");
        let lower = index.lowered(last).expect("index contains the step");
        let inner = self.dq(dep, &lower);
        let out = self.ctx.total_derivative(&inner, last);
        self.cache.lock().unwrap_or_else(|p| p.into_inner()).insert((dep, index.clone()), out.clone());
        out
    }

    /// Coefficient of `∂/∂u_{α,J}` in `X*`:
    /// `D_J Q_α + ξ_i u_{α,J+e_i}`.
    pub fn coefficient(&self, dep: usize, index: &MultiIndex) -> Expr {
        let mut terms = vec![self.dq(dep, index)];
        for (i, x) in self.xi.iter().enumerate() {
            if !x.is_zero() {
                terms.push(x * &Expr::sym(self.ctx.jet(dep, index.raised(i))));
            }
        }
        Expr::add(terms)
    }

    /// `X* e = ξ_i ∂e/∂x_i + Σ φ^J_α ∂e/∂u_{α,J}`.
    pub fn apply_prolonged(&self, e: &Expr) -> Expr {
        let mut terms = Vec::new();
        for (i, x) in self.xi.iter().enumerate() {
            if !x.is_zero() {
                let d = e.diff(self.ctx.independent(i));
                if !d.is_zero() {
                    terms.push(x * &d);
                }
            }
        }
        for s in e.jet_symbols() {
            let (dep, index) = s.jet_parts().expect("jet symbol");
            let d = e.diff(&s);
            if !d.is_zero() {
                terms.push(&self.coefficient(dep, index) * &d);
            }
        }
        Expr::add(terms)
    }
}

impl ChainOperator for Prolongation<'_> {
    fn apply(&self, e: &Expr) -> Result<Expr, JetError> {
        Ok(self.apply_prolonged(e))
    }

    fn name(&self) -> &str {
        &self.field.name
    }
}
