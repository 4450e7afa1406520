//! Checks that the chain alone cannot decide: solution families, orbit
//! equations, finite transformations and dynamical-system tangents.

mod grid;
mod ode;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::engine::{DiffSystem, EngineError};
use crate::expr::{is_zero, EvalError, Expr, ExprError, MultiIndex, SampleBox, Symbol, ZeroOptions, ZeroStatus, ZeroVerdict};
use crate::jet::{JetContext, VectorField};

pub use grid::{finite_transform, fornberg_weights, residual_on_grid, Axis, Grid, TransformOptions, Transformed};
pub use ode::{integrate_ds, map_states, variational_check, Trajectory};

#[derive(Debug, Clone, Error)]
pub enum VerifyError {
    #[error("{0}")]
    Contract(String),
    #[error("integration blew up after t = {time}")]
    BlowUp { time: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A parametrized solution family `u_α = U_α(x; c; λ)`.
#[derive(Debug, Clone)]
pub struct Ansatz {
    pub name: String,
    pub u: Vec<Expr>,
    pub constants: Vec<Symbol>,
    pub group: Option<Symbol>,
    /// Sampling ranges overriding the defaults, usually for the
    /// independent variables.
    pub domain: BTreeMap<Symbol, (f64, f64)>,
}

impl Ansatz {
    pub fn new(name: impl Into<String>, u: Vec<Expr>) -> Self {
        Ansatz {
            name: name.into(),
            u,
            constants: Vec::new(),
            group: None,
            domain: BTreeMap::new(),
        }
    }

    pub fn with_constants(mut self, c: Vec<Symbol>) -> Self {
        self.constants = c;
        self
    }

    pub fn with_group(mut self, g: Symbol) -> Self {
        self.group = Some(g);
        self
    }

    pub fn with_range(mut self, s: Symbol, lo: f64, hi: f64) -> Self {
        self.domain.insert(s, (lo, hi));
        self
    }

    /// Replaces every jet coordinate `u_{α,J}` of `e` by `∂^J U_α`.
    pub fn substitute(&self, ctx: &JetContext, e: &Expr) -> Result<Expr, VerifyError> {
        let mut memo: HashMap<(usize, MultiIndex), Expr> = HashMap::new();
        let mut rules = crate::expr::Substitution::new();
        for s in e.jet_symbols() {
            let (dep, j) = s.jet_parts().expect("jet");
            if dep >= self.u.len() {
                return Err(VerifyError::Contract(format!("ansatz `{}` has no component for {}", self.name, ctx.dependents()[dep])));
            }
            let mut cur = MultiIndex::zero(ctx.dim());
            let mut d = self.u[dep].clone();
            for i in j.steps() {
                cur = cur.raised(i);
                d = match memo.get(&(dep, cur.clone())) {
                    Some(v) => v.clone(),
                    None => {
                        let v = d.diff(ctx.independent(i));
                        memo.insert((dep, cur.clone()), v.clone());
                        v
                    }
                };
            }
            rules.insert(s.clone(), d);
        }
        Ok(e.subs_simultaneous(&rules)?)
    }

    fn zero_options(&self, base: &ZeroOptions) -> ZeroOptions {
        let mut boxes: SampleBox = base.boxes.clone();
        boxes.ranges.extend(self.domain.iter().map(|(s, r)| (s.clone(), *r)));
        ZeroOptions { boxes, ..base.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyVerdict {
    pub checks: Vec<(String, ZeroStatus)>,
    pub max_residual: f64,
    /// Numeric sample points used across all checks.
    pub samples: usize,
    pub notes: Vec<String>,
}

impl VerifyVerdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, z)| z.is_zero())
    }

    pub fn symbolic(&self) -> bool {
        self.checks.iter().all(|(_, z)| z.verdict == ZeroVerdict::SymbolicallyZero)
    }

    /// The least favourable verdict.
    pub fn verdict(&self) -> ZeroVerdict {
        let rank = |v: ZeroVerdict| match v {
            ZeroVerdict::SymbolicallyZero => 0,
            ZeroVerdict::NumericallyZero => 1,
            ZeroVerdict::Unknown => 2,
            ZeroVerdict::Nonzero => 3,
        };
        self.checks
            .iter()
            .map(|(_, z)| z.verdict)
            .max_by_key(|v| rank(*v))
            .unwrap_or(ZeroVerdict::SymbolicallyZero)
    }
}

/// Substitutes the family into each named expression and zero-tests the
/// result.
pub fn verify_expressions(a: &Ansatz, ctx: &JetContext, named: &[(String, Expr)], opts: &ZeroOptions) -> Result<VerifyVerdict, VerifyError> {
    let zopts = a.zero_options(opts);
    let mut out = VerifyVerdict {
        checks: Vec::new(),
        max_residual: 0.0,
        samples: 0,
        notes: Vec::new(),
    };
    for (name, e) in named {
        let r = a.substitute(ctx, e)?;
        let z = is_zero(&r, &zopts)?;
        if z.verdict != ZeroVerdict::SymbolicallyZero {
            out.samples += zopts.samples;
            if z.max_abs.is_finite() {
                out.max_residual = out.max_residual.max(z.max_abs);
            }
        }
        out.checks.push((name.clone(), z));
    }
    Ok(out)
}

/// Whether the family solves every equation of `sys`.
pub fn verify_ansatz(a: &Ansatz, sys: &DiffSystem, opts: &ZeroOptions) -> Result<VerifyVerdict, VerifyError> {
    let named: Vec<(String, Expr)> = sys.equations().iter().map(|eq| (eq.name.clone(), eq.expr.clone())).collect();
    let mut v = verify_expressions(a, sys.ctx(), &named, opts)?;
    if !sys.nonzero().is_empty() {
        v.notes.push(format!("nonvanishing assumptions: {}", sys.nonzero().iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")));
    }
    Ok(v)
}

/// `∂U/∂λ − (φ(x,U) − ξ_i(x,U) ∂U/∂x_i)` for each component.
pub fn orbit_residuals(a: &Ansatz, field: &VectorField, ctx: &JetContext) -> Result<Vec<Expr>, VerifyError> {
    let lam = a.group.as_ref().ok_or_else(|| VerifyError::Contract(format!("ansatz `{}` declares no group parameter", a.name)))?;
    if !field.is_point() {
        return Err(VerifyError::Contract(format!("`{}` is not a point field", field.name)));
    }
    field
        .characteristic(ctx)
        .iter()
        .zip(&a.u)
        .map(|(q, u)| Ok(&u.diff(lam) - &a.substitute(ctx, q)?))
        .collect()
}

/// Whether the family is an orbit of `field` parametrized by the group
/// parameter.
pub fn verify_orbit_ode(a: &Ansatz, field: &VectorField, ctx: &JetContext, opts: &ZeroOptions) -> Result<VerifyVerdict, VerifyError> {
    let named: Vec<(String, Expr)> = orbit_residuals(a, field, ctx)?
        .into_iter()
        .enumerate()
        .map(|(k, e)| (format!("orbit_{}", ctx.dependents()[k]), e))
        .collect();
    // the residuals are already jet-free
    verify_expressions(a, ctx, &named, opts)
}
