use crate::expr::{Expr, MultiIndex};
use crate::jet::JetContext;

use super::{DiffSystem, EngineError};

/// An autonomous system `u̇ = f(u)`; the dependents of `ctx` are the state
/// variables and its single independent variable is time.
#[derive(Debug, Clone)]
pub struct DynSys {
    pub ctx: JetContext,
    pub f: Vec<Expr>,
}

impl DynSys {
    pub fn new(ctx: &JetContext, f: Vec<Expr>) -> Result<Self, EngineError> {
        if ctx.dim() != 1 || f.len() != ctx.dependents().len() {
            return Err(EngineError::Contract("a dynamical system needs one time variable and one component per state variable".into()));
        }
        if f.iter().any(|e| e.jet_order() > 0 || e.free_symbols().iter().any(|s| s.is_independent())) {
            return Err(EngineError::Contract("right-hand sides must be autonomous functions of the state".into()));
        }
        Ok(DynSys { ctx: ctx.clone(), f })
    }

    pub fn state(&self) -> Vec<Expr> {
        (0..self.f.len()).map(|a| self.ctx.u(a)).collect()
    }

    /// Reads a system `u̇_α − f_α = 0` solved for the time derivatives.
    pub fn from_system(sys: &DiffSystem) -> Result<Self, EngineError> {
        let ctx = sys.ctx();
        let mut f = vec![None; ctx.dependents().len()];
        for eq in sys.equations() {
            let (dep, j) = eq.lead.jet_parts().expect("jet");
            if j.order() != 1 {
                return Err(EngineError::Contract(format!("equation `{}` is not solved for a time derivative", eq.name)));
            }
            f[dep] = Some(eq.rhs.clone());
        }
        let f = f
            .into_iter()
            .enumerate()
            .map(|(a, e)| e.ok_or_else(|| EngineError::Contract(format!("no equation for {}", ctx.dependents()[a]))))
            .collect::<Result<Vec<_>, _>>()?;
        DynSys::new(ctx, f)
    }

    /// The equivalent differential system, solved for `u̇`.
    pub fn to_system(&self) -> Result<DiffSystem, EngineError> {
        let mut s = DiffSystem::new(&self.ctx);
        for (a, fa) in self.f.iter().enumerate() {
            let lead = self.ctx.jet(a, MultiIndex::zero(1).raised(0));
            let e = &Expr::sym(lead.clone()) - fa;
            s.add_equation(&format!("{}_dot", self.ctx.dependents()[a]), e, Some(&lead), 0)?;
        }
        Ok(s)
    }

    /// Jacobian `∂f_α/∂u_β`.
    pub fn jacobian(&self) -> Vec<Vec<Expr>> {
        let n = self.f.len();
        self.f
            .iter()
            .map(|fa| (0..n).map(|b| fa.diff(&self.ctx.dependent(b))).collect())
            .collect()
    }
}

/// `ψ_α = Σ_β f_β ∂φ_α/∂u_β − φ_β ∂f_α/∂u_β`.
pub fn ds_commutator(sys: &DynSys, phi: &[Expr]) -> Vec<Expr> {
    let n = sys.f.len();
    let us: Vec<_> = (0..n).map(|b| sys.ctx.dependent(b)).collect();
    (0..n)
        .map(|a| {
            let mut terms = Vec::with_capacity(2 * n);
            for (b, ub) in us.iter().enumerate() {
                terms.push(&sys.f[b] * &phi[a].diff(ub));
                terms.push(-(&phi[b] * &sys.f[a].diff(ub)));
            }
            Expr::add(terms)
        })
        .collect()
}
