//! Restriction to solution manifolds and the symmetry chains built on it.

mod chain;
mod dynsys;
mod system;

use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::jet::{FieldKind, JetError, VectorField};

pub use chain::{exact_symmetry_check, exp_series_terms, partial_chain, run_chain, symbolic_only, ChainOptions, ChainResult, ChainStatus, ChainStep};
pub use dynsys::{ds_commutator, DynSys};
pub use system::{in_cone, rank_cmp, DiffSystem, Equation, SideCondition, SideConditionKind, MAX_RESTRICT_ROUNDS};

#[derive(Debug, Clone, Error)]
pub enum EngineError {
    #[error("restriction of `{expr}` did not reach a fixed point in {rounds} rounds")]
    NonTerminating { expr: String, rounds: usize },
    #[error("equation `{equation}` cannot be solved for {coordinate}")]
    BadSolveFor { equation: String, coordinate: String },
    #[error("equation `{equation}` has no linearly occurring jet coordinate: {expr}")]
    Unsolvable { equation: String, expr: String },
    #[error("chain step {step} cannot be appended: {reason}")]
    UnsolvableStep { step: u32, reason: String, partial: Box<ChainResult> },
    #[error("vector field `{0}` is identically zero")]
    DegenerateField(String),
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// `Δ` together with the invariant-surface conditions `Q_α = 0` of a point
/// field.
pub fn conditional_system(field: &VectorField, sys: &DiffSystem) -> Result<DiffSystem, EngineError> {
    let FieldKind::Point { xi, phi } = &field.kind else {
        return Err(EngineError::Contract(format!("`{}` is not a point field", field.name)));
    };
    if xi.iter().chain(phi).all(Expr::is_zero) {
        return Err(EngineError::DegenerateField(field.name.clone()));
    }
    let mut out = sys.clone();
    for (a, q) in field.characteristic(sys.ctx()).into_iter().enumerate() {
        let r = out.restrict(&q)?;
        if r.is_zero() {
            continue;
        }
        out.add_equation(&format!("invariance_{}", sys.ctx().dependents()[a]), r, None, 0)?;
    }
    Ok(out)
}

/// `𝓛(u, Δ)φ = Σ ∂Δ/∂u_{α,J} D_J φ_α` for `φ` depending on `x` only.
pub fn frechet_apply(phi: &[Expr], sys: &DiffSystem) -> Result<Vec<Expr>, EngineError> {
    let ctx = sys.ctx();
    if phi.iter().any(|p| !p.jet_symbols().is_empty()) {
        return Err(EngineError::Contract("Fréchet directions must depend on the independent variables only".into()));
    }
    Ok(sys
        .equations()
        .iter()
        .map(|eq| {
            let mut terms = Vec::new();
            for s in eq.expr.jet_symbols() {
                let (dep, j) = s.jet_parts().expect("jet");
                let dphi = j.steps().into_iter().fold(phi[dep].clone(), |acc, i| acc.diff(ctx.independent(i)));
                terms.push(&eq.expr.diff(&s) * &dphi);
            }
            Expr::add(terms)
        })
        .collect())
}

/// The point field `φ_α(x) ∂/∂u_α`.
pub fn direction_field(name: &str, phi: Vec<Expr>, sys: &DiffSystem) -> Result<VectorField, EngineError> {
    Ok(VectorField::point(name, vec![Expr::zero(); sys.ctx().dim()], phi)?)
}
