use num_traits::Signed;

use crate::expr::{factor_split, is_zero, Expr, Node, ZeroMode, ZeroOptions, ZeroStatus, ZeroVerdict};
use crate::jet::{ChainOperator, Prolongation, VectorField};

use super::system::{DiffSystem, SideCondition, SideConditionKind};
use super::EngineError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainStatus {
    Exact,
    Partial(u32),
    Inconsistent(u32),
    Inconclusive(u32),
}

impl ChainStatus {
    pub fn name(&self) -> &'static str {
        match self {
            ChainStatus::Exact => "exact",
            ChainStatus::Partial(_) => "partial",
            ChainStatus::Inconsistent(_) => "inconsistent",
            ChainStatus::Inconclusive(_) => "inconclusive",
        }
    }

    pub fn order(&self) -> Option<u32> {
        match self {
            ChainStatus::Exact => Some(0),
            ChainStatus::Partial(s) => Some(*s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainStep {
    pub r: u32,
    /// `X*` applied to the previous restricted step, per component.
    pub raw: Vec<Expr>,
    /// The raw step restricted to the current system.
    pub restricted: Vec<Expr>,
    /// Live components after the factor policy; what gets appended.
    pub reduced: Vec<Expr>,
    /// The system the step was restricted against.
    pub basis: DiffSystem,
    /// Whether the step contributed equations to the system.
    pub appended: bool,
    pub side_conditions: Vec<SideCondition>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub operator: String,
    pub steps: Vec<ChainStep>,
    pub status: ChainStatus,
    pub side_conditions: Vec<SideCondition>,
    pub system: DiffSystem,
}

impl ChainResult {
    pub fn step(&self, r: u32) -> Option<&ChainStep> {
        self.steps.iter().find(|s| s.r == r)
    }
}

#[derive(Debug, Clone)]
pub struct ChainOptions {
    pub max_order: u32,
    pub strong: bool,
    pub zero: ZeroOptions,
    /// Drop explicit independent-variable factors (recorded as side
    /// conditions).
    pub drop_independent_factors: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            max_order: 10,
            strong: false,
            zero: ZeroOptions::default(),
            drop_independent_factors: true,
        }
    }
}

fn vanishes(e: &Expr, opts: &ZeroOptions) -> Result<ZeroStatus, EngineError> {
    if e.is_zero() {
        return Ok(ZeroStatus::symbolic());
    }
    Ok(is_zero(e, opts)?)
}

enum Reduced {
    /// Every factor was droppable or the step is a nonzero constant.
    Inconsistent,
    /// A constraint on parameters only.
    Parameters(Expr),
    /// An equation to append.
    Equation(Expr),
}

fn is_independent_power(f: &Expr) -> bool {
    let base = match f.node() {
        Node::Pow(b, _) => b,
        _ => f,
    };
    base.as_symbol().is_some_and(|s| s.is_independent())
}

/// Applies the factor policy to a nonzero restricted component.
fn reduce(e: &Expr, sys: &DiffSystem, r: u32, opts: &ChainOptions, side: &mut Vec<SideCondition>) -> Reduced {
    if e.as_num().is_some() {
        return Reduced::Inconsistent;
    }
    let mut kept = Vec::new();
    for f in factor_split(e) {
        if sys.is_declared_nonzero(&f) {
            side.push(SideCondition {
                kind: SideConditionKind::DroppedFactor(f),
                step: r,
            });
        } else if opts.drop_independent_factors && is_independent_power(&f) {
            let base = match f.node() {
                Node::Pow(b, _) => b.clone(),
                _ => f.clone(),
            };
            side.push(SideCondition::nonvanishing(base, r));
            side.push(SideCondition {
                kind: SideConditionKind::DroppedFactor(f),
                step: r,
            });
        } else {
            // b^k = 0 has the zero set of b = 0
            match f.node() {
                Node::Pow(b, k) if k.is_positive() => kept.push(b.clone()),
                _ => kept.push(f),
            }
        }
    }
    if kept.is_empty() {
        return Reduced::Inconsistent;
    }
    let core = Expr::mul(kept);
    if core.jet_symbols().is_empty() {
        let syms = core.free_symbols();
        if syms.iter().any(|s| s.is_parametric()) && !syms.iter().any(|s| s.is_independent()) {
            return Reduced::Parameters(core);
        }
        return Reduced::Inconsistent;
    }
    Reduced::Equation(core)
}

/// Runs the chain `Δ^(r+1) = op(Δ̃^(r))` from the equations of `sys`.
///
/// The order reported for a partial symmetry is the number of nonvanishing
/// restricted steps before the first vanishing one.
pub fn run_chain(op: &dyn ChainOperator, sys: &DiffSystem, opts: &ChainOptions) -> Result<ChainResult, EngineError> {
    let mut system = sys.clone();
    let mut frontier: Vec<Expr> = sys.equations().iter().map(|e| e.expr.clone()).collect();
    let mut result = ChainResult {
        operator: op.name().to_string(),
        steps: vec![ChainStep {
            r: 0,
            raw: frontier.clone(),
            restricted: frontier.clone(),
            reduced: frontier.clone(),
            basis: DiffSystem::new(sys.ctx()),
            appended: false,
            side_conditions: vec![],
            notes: vec![],
        }],
        status: ChainStatus::Inconclusive(opts.max_order),
        side_conditions: vec![],
        system: sys.clone(),
    };
    let mut nonzero_steps = 0u32;
    for r in 1..=opts.max_order {
        let raw: Vec<Expr> = frontier.iter().map(|e| op.apply(e)).collect::<Result<_, _>>()?;
        let restricted: Vec<Expr> = if opts.strong {
            raw.clone()
        } else {
            raw.iter().map(|e| system.restrict(e)).collect::<Result<_, _>>()?
        };
        let mut step = ChainStep {
            r,
            raw,
            restricted: restricted.clone(),
            reduced: vec![],
            basis: system.clone(),
            appended: false,
            side_conditions: vec![],
            notes: vec![],
        };
        let mut live = Vec::new();
        for e in &restricted {
            let z = vanishes(e, &opts.zero)?;
            match z.verdict {
                ZeroVerdict::SymbolicallyZero => {}
                ZeroVerdict::NumericallyZero => step.notes.push(format!("component `{e}` vanishes numerically")),
                ZeroVerdict::Nonzero | ZeroVerdict::Unknown => live.push(e.clone()),
            }
        }
        if live.is_empty() {
            result.status = if nonzero_steps == 0 {
                ChainStatus::Exact
            } else {
                ChainStatus::Partial(nonzero_steps)
            };
            result.steps.push(step);
            break;
        }
        nonzero_steps += 1;

        if let Some(k) = op.period() {
            if r >= k {
                step.notes.push(format!("operator has period {k}; the chain closes"));
                result.status = ChainStatus::Partial(nonzero_steps);
                result.steps.push(step);
                break;
            }
        }

        let mut next = Vec::new();
        let mut inconsistent = false;
        let mut equations = Vec::new();
        for e in &live {
            let mut side = Vec::new();
            match reduce(e, &system, r, opts, &mut side) {
                Reduced::Inconsistent => inconsistent = true,
                Reduced::Parameters(p) => {
                    side.push(SideCondition {
                        kind: SideConditionKind::ParameterConstraint(p),
                        step: r,
                    });
                }
                Reduced::Equation(core) => {
                    step.reduced.push(core.clone());
                    next.push(if opts.strong { e.clone() } else { core.clone() });
                    equations.push(core);
                }
            }
            step.side_conditions.extend(side);
        }
        if inconsistent {
            result.status = ChainStatus::Inconsistent(r);
            result.side_conditions.extend(step.side_conditions.clone());
            result.steps.push(step);
            break;
        }
        if r == opts.max_order {
            result.status = ChainStatus::Inconclusive(r);
            result.side_conditions.extend(step.side_conditions.clone());
            result.steps.push(step);
            break;
        }
        if !opts.strong {
            for (k, core) in equations.iter().enumerate() {
                let name = if equations.len() == 1 { format!("step{r}") } else { format!("step{r}_{k}") };
                match system.add_equation(&name, core.clone(), None, r) {
                    Ok(side) => step.side_conditions.extend(side),
                    Err(err) => {
                        result.status = ChainStatus::Inconclusive(r);
                        result.side_conditions.extend(step.side_conditions.clone());
                        result.steps.push(step);
                        result.system = system;
                        return Err(EngineError::UnsolvableStep {
                            step: r,
                            reason: err.to_string(),
                            partial: Box::new(result),
                        });
                    }
                }
            }
            step.appended = !equations.is_empty();
        }
        result.side_conditions.extend(step.side_conditions.clone());
        result.steps.push(step);
        if next.is_empty() {
            // only parameter constraints remain; their images vanish
            result.status = ChainStatus::Partial(nonzero_steps);
            break;
        }
        frontier = next;
    }
    result.system = system;
    Ok(result)
}

pub fn partial_chain(field: &VectorField, sys: &DiffSystem, opts: &ChainOptions) -> Result<ChainResult, EngineError> {
    let p = Prolongation::new(sys.ctx(), field);
    run_chain(&p, sys, opts)
}

/// Aggregated verdict of `X*Δ_k` restricted to the system, over all `k`.
pub fn exact_symmetry_check(op: &dyn ChainOperator, sys: &DiffSystem, zero: &ZeroOptions) -> Result<ZeroStatus, EngineError> {
    let mut worst = ZeroStatus::symbolic();
    for eq in sys.equations() {
        let r = sys.restrict(&op.apply(&eq.expr)?)?;
        let z = vanishes(&r, zero)?;
        let rank = |v: ZeroVerdict| match v {
            ZeroVerdict::SymbolicallyZero => 0,
            ZeroVerdict::NumericallyZero => 1,
            ZeroVerdict::Unknown => 2,
            ZeroVerdict::Nonzero => 3,
        };
        if rank(z.verdict) > rank(worst.verdict) {
            worst = z;
        }
    }
    Ok(worst)
}

/// Unrestricted iterates `(X*)^r Δ` for `r = 1..=k`, per component.
pub fn exp_series_terms(op: &dyn ChainOperator, sys: &DiffSystem, k: u32) -> Result<Vec<Vec<Expr>>, EngineError> {
    let mut cur: Vec<Expr> = sys.equations().iter().map(|e| e.expr.clone()).collect();
    let mut out = Vec::new();
    for _ in 0..k {
        cur = cur.iter().map(|e| op.apply(e)).collect::<Result<_, _>>()?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// `zero` options that never sample; used where only syntactic answers are
/// wanted.
pub fn symbolic_only(base: &ZeroOptions) -> ZeroOptions {
    ZeroOptions {
        mode: ZeroMode::SymbolicOnly,
        ..base.clone()
    }
}
