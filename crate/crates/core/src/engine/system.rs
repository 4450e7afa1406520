use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Mutex;

use crate::expr::{factor_split, Expr, MultiIndex, Node, Substitution, Symbol};
use crate::jet::JetContext;

use super::EngineError;

/// Fixed-point bound for [`DiffSystem::restrict`].
pub const MAX_RESTRICT_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SideConditionKind {
    Nonvanishing(Expr),
    ParameterConstraint(Expr),
    DroppedFactor(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideCondition {
    pub kind: SideConditionKind,
    pub step: u32,
}

impl SideCondition {
    pub fn nonvanishing(e: Expr, step: u32) -> Self {
        SideCondition {
            kind: SideConditionKind::Nonvanishing(e),
            step,
        }
    }
}

impl fmt::Display for SideCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SideConditionKind::Nonvanishing(e) => write!(f, "nonzero {e}"),
            SideConditionKind::ParameterConstraint(e) => write!(f, "{e} = 0"),
            SideConditionKind::DroppedFactor(e) => write!(f, "dropped factor {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equation {
    pub name: String,
    pub expr: Expr,
    pub lead: Symbol,
    pub rhs: Expr,
}

/// Equations solved for leading jet coordinates, closed under total
/// differentiation by [`DiffSystem::restrict`].
#[derive(Debug)]
pub struct DiffSystem {
    ctx: JetContext,
    equations: Vec<Equation>,
    nonzero: Vec<Expr>,
    /// `D_K rhs` per equation index and `K`.
    memo: Mutex<HashMap<(usize, MultiIndex), Expr>>,
}

impl Clone for DiffSystem {
    fn clone(&self) -> Self {
        DiffSystem {
            ctx: self.ctx.clone(),
            equations: self.equations.clone(),
            nonzero: self.nonzero.clone(),
            memo: Mutex::new(HashMap::new()),
        }
    }
}

/// True when `s` is `lead` or one of its derivatives.
pub fn in_cone(s: &Symbol, lead: &Symbol) -> bool {
    match (s.jet_parts(), lead.jet_parts()) {
        (Some((d1, j1)), Some((d2, j2))) => d1 == d2 && j1.dominates(j2),
        _ => false,
    }
}

/// Ranking of candidate leading coordinates: highest order first, then the
/// derivative counts compared from the most recently declared variable
/// backwards, then the lowest dependent index.
pub fn rank_cmp(a: &Symbol, b: &Symbol) -> Ordering {
    let (da, ja) = a.jet_parts().expect("jet");
    let (db, jb) = b.jet_parts().expect("jet");
    ja.order()
        .cmp(&jb.order())
        .then_with(|| ja.counts().iter().rev().cmp(jb.counts().iter().rev()))
        .then_with(|| db.cmp(&da))
}

impl DiffSystem {
    pub fn new(ctx: &JetContext) -> Self {
        DiffSystem {
            ctx: ctx.clone(),
            equations: Vec::new(),
            nonzero: Vec::new(),
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn ctx(&self) -> &JetContext {
        &self.ctx
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn equation(&self, name: &str) -> Option<&Equation> {
        self.equations.iter().find(|e| e.name == name)
    }

    pub fn nonzero(&self) -> &[Expr] {
        &self.nonzero
    }

    pub fn assume_nonzero(&mut self, e: Expr) {
        if !self.nonzero.contains(&e) {
            self.nonzero.push(e);
        }
    }

    /// Whether `f` is known to be nonzero: it is (a power of) a declared
    /// nonzero expression or of one of its factors.
    pub fn is_declared_nonzero(&self, f: &Expr) -> bool {
        let base = match f.node() {
            Node::Pow(b, _) => b,
            _ => f,
        };
        self.nonzero.iter().any(|n| {
            n.rational_multiple_of(base).is_some() || factor_split(n).iter().any(|g| g.rational_multiple_of(base).is_some() || g == f)
        })
    }

    fn clear_memo(&self) {
        self.memo.lock().unwrap_or_else(|p| p.into_inner()).clear();
    }

    /// Solves `e = 0` for `lead`; `None` if `e` is not linear in it or the
    /// solution involves the lead's cone. Returns `(rhs, coefficient)`.
    pub fn solve_for(e: &Expr, lead: &Symbol) -> Option<(Expr, Expr)> {
        let c = e.diff(lead);
        if c.is_zero() || !c.diff(lead).is_zero() {
            return None;
        }
        let rest = e - &(&c * &Expr::sym(lead.clone()));
        let touches = |x: &Expr| x.jet_symbols().iter().any(|s| in_cone(s, lead));
        if touches(&c) || touches(&rest) {
            return None;
        }
        let rhs = (-rest).checked_div(&c).ok()?;
        Some((rhs, c))
    }

    /// Candidate leads of `e`, best first.
    pub fn ranked_leads(e: &Expr) -> Vec<Symbol> {
        let mut c: Vec<Symbol> = e.jet_symbols().into_iter().collect();
        c.sort_by(|a, b| rank_cmp(b, a));
        c
    }

    /// Adds `expr = 0`, solved for `solvefor` or the best-ranked solvable
    /// coordinate. The expression should already be restricted. Equations
    /// whose leads become derivatives of the new lead are re-reduced.
    pub fn add_equation(&mut self, name: &str, expr: Expr, solvefor: Option<&Symbol>, step: u32) -> Result<Vec<SideCondition>, EngineError> {
        let (lead, rhs, coef) = match solvefor {
            Some(l) => {
                let (rhs, c) = Self::solve_for(&expr, l).ok_or_else(|| EngineError::BadSolveFor {
                    equation: name.to_string(),
                    coordinate: l.name().to_string(),
                })?;
                (l.clone(), rhs, c)
            }
            None => {
                let mut found = None;
                for l in Self::ranked_leads(&expr) {
                    if let Some((rhs, c)) = Self::solve_for(&expr, &l) {
                        found = Some((l, rhs, c));
                        break;
                    }
                }
                found.ok_or_else(|| EngineError::Unsolvable {
                    equation: name.to_string(),
                    expr: expr.to_string(),
                })?
            }
        };
        let mut side = Vec::new();
        if coef.as_num().is_none() && !self.is_declared_nonzero(&coef) {
            side.push(SideCondition::nonvanishing(coef, step));
        }

        // equations living in the new cone are displaced and re-reduced
        let (displaced, kept): (Vec<Equation>, Vec<Equation>) = std::mem::take(&mut self.equations).into_iter().partition(|eq| in_cone(&eq.lead, &lead));
        self.equations = kept;
        self.equations.push(Equation {
            name: name.to_string(),
            expr,
            lead,
            rhs,
        });
        self.clear_memo();

        // keep right-hand sides reduced
        let mut redo = displaced;
        let mut i = 0;
        while i < self.equations.len() - 1 {
            let eq = &self.equations[i];
            let reduced = self.restrict_excluding(&eq.rhs, i)?;
            if reduced.jet_symbols().iter().any(|s| in_cone(s, &eq.lead)) {
                let eq = self.equations.remove(i);
                redo.push(eq);
                self.clear_memo();
                continue;
            }
            self.equations[i].rhs = reduced;
            i += 1;
        }
        self.clear_memo();
        for eq in redo {
            let r = self.restrict(&eq.expr)?;
            if r.is_zero() {
                continue;
            }
            side.extend(self.add_equation(&eq.name, r, None, step)?);
        }
        Ok(side)
    }

    /// Substitutes solved coordinates and their differential consequences
    /// until no coordinate of any solved cone remains.
    pub fn restrict(&self, e: &Expr) -> Result<Expr, EngineError> {
        self.restrict_inner(e, None)
    }

    fn restrict_excluding(&self, e: &Expr, skip: usize) -> Result<Expr, EngineError> {
        self.restrict_inner(e, Some(skip))
    }

    fn consequence(&self, k: usize, index: &MultiIndex, use_memo: bool) -> Expr {
        let key = (k, index.clone());
        if use_memo {
            if let Some(v) = self.memo.lock().unwrap_or_else(|p| p.into_inner()).get(&key) {
                return v.clone();
            }
        }
        let v = self.ctx.total_derivative_multi(&self.equations[k].rhs, index);
        if use_memo {
            self.memo.lock().unwrap_or_else(|p| p.into_inner()).insert(key, v.clone());
        }
        v
    }

    fn restrict_inner(&self, e: &Expr, skip: Option<usize>) -> Result<Expr, EngineError> {
        let mut cur = e.clone();
        for _ in 0..MAX_RESTRICT_ROUNDS {
            let mut rules = Substitution::new();
            for s in cur.jet_symbols() {
                let hit = self.equations.iter().enumerate().find(|(k, eq)| Some(*k) != skip && in_cone(&s, &eq.lead));
                if let Some((k, eq)) = hit {
                    let (_, j) = s.jet_parts().expect("jet");
                    let (_, jl) = eq.lead.jet_parts().expect("jet");
                    let diff = j.difference(jl).expect("cone member");
                    rules.insert(s.clone(), self.consequence(k, &diff, skip.is_none()));
                }
            }
            if rules.is_empty() {
                return Ok(cur);
            }
            cur = cur.subs_simultaneous(&rules)?;
        }
        Err(EngineError::NonTerminating {
            expr: e.to_string(),
            rounds: MAX_RESTRICT_ROUNDS,
        })
    }

    /// Solved form of every equation, for display.
    pub fn solved_forms(&self) -> BTreeMap<String, String> {
        self.equations.iter().map(|eq| (eq.name.clone(), format!("{} = {}", eq.lead, eq.rhs))).collect()
    }
}
