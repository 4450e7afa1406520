use std::collections::HashMap;
use std::sync::Mutex;

use num_traits::{One, Zero};

use crate::expr::{Expr, MultiIndex, Rational, Substitution};

use super::{ChainOperator, JetContext, JetError};

/// A point map `x̃ = A x + b`, `ũ_α = B_α(x, u)` with constant invertible `A`.
#[derive(Debug)]
pub struct DiscreteMap {
    pub name: String,
    ctx: JetContext,
    to_x: Vec<Expr>,
    to_u: Vec<Expr>,
    ainv: Vec<Vec<Rational>>,
    period: Option<u32>,
    cache: Mutex<HashMap<(usize, MultiIndex), Expr>>,
}

impl Clone for DiscreteMap {
    fn clone(&self) -> Self {
        DiscreteMap {
            name: self.name.clone(),
            ctx: self.ctx.clone(),
            to_x: self.to_x.clone(),
            to_u: self.to_u.clone(),
            ainv: self.ainv.clone(),
            period: self.period,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

fn invert(mut a: Vec<Vec<Rational>>) -> Option<Vec<Vec<Rational>>> {
    let n = a.len();
    let mut inv: Vec<Vec<Rational>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let (ac, ic) = (a[col][j].clone(), inv[col][j].clone());
                    a[r][j] -= &f * ac;
                    inv[r][j] -= &f * ic;
                }
            }
        }
    }
    Some(inv)
}

impl DiscreteMap {
    pub fn new(ctx: &JetContext, name: impl Into<String>, to_x: Vec<Expr>, to_u: Vec<Expr>, period: Option<u32>) -> Result<Self, JetError> {
        let name = name.into();
        let unsupported = |why: String| JetError::UnsupportedMap(format!("{name}: {why}"));
        if to_x.len() != ctx.dim() || to_u.len() != ctx.dependents().len() {
            return Err(unsupported("every variable needs an image".into()));
        }
        let mut a = vec![vec![Rational::zero(); ctx.dim()]; ctx.dim()];
        for (i, xt) in to_x.iter().enumerate() {
            if !xt.jet_symbols().is_empty() {
                return Err(unsupported(format!("image of {} depends on the dependent variables", ctx.independent(i))));
            }
            let mut rest = xt.clone();
            for (j, xj) in ctx.independents().iter().enumerate() {
                let d = xt.diff(xj);
                match d.as_num() {
                    Some(q) => a[i][j] = q.clone(),
                    None => return Err(unsupported(format!("image of {} is not affine", ctx.independent(i)))),
                }
                rest = &rest - &(&d * &Expr::sym(xj.clone()));
            }
            if rest.free_symbols().iter().any(|s| s.is_independent()) {
                return Err(unsupported(format!("image of {} is not affine", ctx.independent(i))));
            }
        }
        if let Some(bad) = to_u.iter().find(|e| e.jet_order() > 0) {
            return Err(unsupported(format!("image `{bad}` depends on derivatives")));
        }
        let ainv = invert(a).ok_or_else(|| unsupported("linear part is singular".into()))?;
        Ok(DiscreteMap {
            name,
            ctx: ctx.clone(),
            to_x,
            to_u,
            ainv,
            period,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn period(&self) -> Option<u32> {
        self.period
    }

    /// `∂/∂x̃_i = Σ_j (A⁻¹)_{ji} D_j`.
    fn transformed_derivative(&self, e: &Expr, i: usize) -> Expr {
        Expr::add((0..self.ctx.dim()).filter(|&j| !self.ainv[j][i].is_zero()).map(|j| self.ctx.total_derivative(e, j).scale(&self.ainv[j][i])))
    }

    /// The image `ũ_{α,J}` expressed on the original jet.
    pub fn jet_image(&self, dep: usize, index: &MultiIndex) -> Expr {
        if index.is_zero() {
            return self.to_u[dep].clone();
        }
        if let Some(e) = self.cache.lock().unwrap_or_else(|p| p.into_inner()).get(&(dep, index.clone())) {
            return e.clone();
        }
        let last = *index.steps().last().expect("nonzero index");
        let lower = index.lowered(last).expect("index contains the step");
        let out = self.transformed_derivative(&self.jet_image(dep, &lower), last);
        self.cache.lock().unwrap_or_else(|p| p.into_inner()).insert((dep, index.clone()), out.clone());
        out
    }

    /// `R* e`: every variable and jet coordinate replaced by its image.
    pub fn prolong(&self, e: &Expr) -> Result<Expr, JetError> {
        let mut rules = Substitution::new();
        for (i, xi) in self.ctx.independents().iter().enumerate() {
            rules.insert(xi.clone(), self.to_x[i].clone());
        }
        for s in e.jet_symbols() {
            let (dep, index) = s.jet_parts().expect("jet symbol");
            rules.insert(s.clone(), self.jet_image(dep, index));
        }
        Ok(e.subs_simultaneous(&rules)?)
    }
}

impl ChainOperator for DiscreteMap {
    fn apply(&self, e: &Expr) -> Result<Expr, JetError> {
        self.prolong(e)
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn period(&self) -> Option<u32> {
        self.period
    }
}
