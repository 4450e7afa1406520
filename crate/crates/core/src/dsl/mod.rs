//! Problem files and analysis reports.
//!
//! A problem file is a sequence of `;`-terminated statements with `#` line
//! comments. [`parse_problem`] resolves every identifier against the
//! declarations and returns either a [`ProblemSpec`] or the full list of
//! diagnostics. Reports are written by [`emit_report`].

mod lexer;
mod parser;
mod report;

use std::collections::BTreeMap;
use std::fmt;

use crate::expr::{Expr, Symbol};
use crate::jet::{DiscreteMap, JetContext, JetError, VectorField};
use crate::verify::Ansatz;

pub use lexer::{lex, Tok, Token};
pub use parser::{parse_expr, parse_problem};
pub use report::{emit_report, render_text, ExpectationReport, Report, StepReport, TaskReport, VerdictReport};

/// Byte range into the source plus the 1-based position of `begin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub begin: usize,
    pub end: usize,
    pub line: usize,
    pub col: usize,
}

impl SourceSpan {
    pub fn to(self, other: SourceSpan) -> SourceSpan {
        SourceSpan { end: other.end.max(self.end), ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagKind {
    Lexical,
    Syntax,
    Undeclared,
    Arity,
    Duplicate,
    /// Well-formed but meaningless: a solvefor coordinate missing from its
    /// equation, a map without an image for some variable, and so on.
    Semantic,
}

impl DiagKind {
    pub fn name(self) -> &'static str {
        match self {
            DiagKind::Lexical => "lexical error",
            DiagKind::Syntax => "syntax error",
            DiagKind::Undeclared => "undeclared symbol",
            DiagKind::Arity => "arity mismatch",
            DiagKind::Duplicate => "duplicate declaration",
            DiagKind::Semantic => "invalid declaration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagKind,
    pub message: String,
    pub span: SourceSpan,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.span.line, self.span.col, self.kind.name(), self.message)
    }
}

impl std::error::Error for Diagnostic {}

#[derive(Debug, Clone)]
pub struct EquationDecl {
    pub name: String,
    /// `lhs − rhs`, canonical.
    pub expr: Expr,
    pub solvefor: Option<Symbol>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct FieldDecl {
    pub field: VectorField,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct MapDecl {
    pub name: String,
    pub to_x: Vec<Expr>,
    pub to_u: Vec<Expr>,
    pub period: Option<u32>,
    pub span: SourceSpan,
}

impl MapDecl {
    pub fn build(&self, ctx: &JetContext) -> Result<DiscreteMap, JetError> {
        DiscreteMap::new(ctx, self.name.clone(), self.to_x.clone(), self.to_u.clone(), self.period)
    }
}

#[derive(Debug, Clone)]
pub enum AssumptionKind {
    /// `param = value`, solved from the stated equality.
    Parameter { param: Symbol, value: Expr },
    Nonzero(Expr),
}

#[derive(Debug, Clone)]
pub struct Assumption {
    pub kind: AssumptionKind,
    /// As written, for echoing in reports.
    pub stated: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct AnsatzDecl {
    pub ansatz: Ansatz,
    pub span: SourceSpan,
}

/// A concrete choice for an uninterpreted function, used only numerically.
#[derive(Debug, Clone)]
pub struct RealizationDecl {
    pub name: String,
    pub params: Vec<Symbol>,
    pub body: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Exact,
    Chain,
    DiscreteChain,
    Conditional,
    Frechet,
    DsCommutator,
    Verify,
    Orbit,
    Variational,
    SeriesCheck,
    Transform,
    Residual,
    Trajectory,
    MapOrbit,
}

impl TaskKind {
    pub const ALL: [TaskKind; 14] = [
        TaskKind::Exact,
        TaskKind::Chain,
        TaskKind::DiscreteChain,
        TaskKind::Conditional,
        TaskKind::Frechet,
        TaskKind::DsCommutator,
        TaskKind::Verify,
        TaskKind::Orbit,
        TaskKind::Variational,
        TaskKind::SeriesCheck,
        TaskKind::Transform,
        TaskKind::Residual,
        TaskKind::Trajectory,
        TaskKind::MapOrbit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Exact => "exact",
            TaskKind::Chain => "chain",
            TaskKind::DiscreteChain => "discrete-chain",
            TaskKind::Conditional => "conditional",
            TaskKind::Frechet => "frechet",
            TaskKind::DsCommutator => "ds-commutator",
            TaskKind::Verify => "verify",
            TaskKind::Orbit => "orbit",
            TaskKind::Variational => "variational",
            TaskKind::SeriesCheck => "series-check",
            TaskKind::Transform => "transform",
            TaskKind::Residual => "residual",
            TaskKind::Trajectory => "trajectory",
            TaskKind::MapOrbit => "map-orbit",
        }
    }

    pub fn from_name(s: &str) -> Option<TaskKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Whether the task produces a chain that `system=` can refer to.
    pub fn has_chain(self) -> bool {
        matches!(self, TaskKind::Chain | TaskKind::DiscreteChain | TaskKind::Conditional)
    }

    /// Option keys accepted besides variable bindings and ranges.
    pub(crate) fn keys(self) -> &'static [&'static str] {
        match self {
            TaskKind::Exact => &["field", "map"],
            TaskKind::Chain => &["field", "max_order", "strong"],
            TaskKind::DiscreteChain => &["map", "max_order", "strong"],
            TaskKind::Conditional => &["field", "max_order", "strong"],
            TaskKind::Frechet => &["field", "instances"],
            TaskKind::DsCommutator => &["field", "factor", "zero"],
            TaskKind::Verify => &["ansatz", "system"],
            TaskKind::Orbit => &["ansatz", "field"],
            TaskKind::Variational => &["ansatz", "field", "h"],
            TaskKind::SeriesCheck => &["field", "terms"],
            TaskKind::Transform => &["ansatz", "field", "shift", "n"],
            TaskKind::Residual => &["ansatz", "n", "system"],
            TaskKind::Trajectory => &["ansatz", "h"],
            TaskKind::MapOrbit => &["ansatz", "map", "shift", "h"],
        }
    }

    /// Reference options the task cannot do without.
    pub(crate) fn required(self) -> &'static [&'static str] {
        match self {
            TaskKind::Exact => &[],
            TaskKind::Chain | TaskKind::Conditional | TaskKind::Frechet | TaskKind::DsCommutator | TaskKind::SeriesCheck => &["field"],
            TaskKind::DiscreteChain => &["map"],
            TaskKind::Verify | TaskKind::Residual | TaskKind::Trajectory => &["ansatz"],
            TaskKind::Orbit | TaskKind::Variational | TaskKind::Transform => &["ansatz", "field"],
            TaskKind::MapOrbit => &["ansatz", "map"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptValue {
    Flag,
    Number(f64),
    Name(String),
    Range(f64, f64),
    List(Vec<String>),
}

impl OptValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            OptValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_name(&self) -> Option<&str> {
        match self {
            OptValue::Name(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskRequest {
    pub name: String,
    pub kind: TaskKind,
    pub options: BTreeMap<String, OptValue>,
    /// Numeric values for constants, parameters and `lambda`.
    pub bindings: BTreeMap<Symbol, f64>,
    /// Sampling or integration ranges for independent variables.
    pub ranges: BTreeMap<Symbol, (f64, f64)>,
    /// How many assumptions precede the task; only those apply to it.
    pub assumptions: usize,
    pub span: SourceSpan,
}

impl TaskRequest {
    pub fn name_opt(&self, key: &str) -> Option<&str> {
        self.options.get(key).and_then(OptValue::as_name)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.options.get(key).and_then(OptValue::as_number)
    }

    pub fn flag(&self, key: &str) -> bool {
        self.options.contains_key(key)
    }
}

#[derive(Debug, Clone)]
pub enum ExpectCheck {
    Status(String),
    Order(u32),
    Restricted(u32, Expr),
    Raw(u32, Expr),
    Verdict(bool),
}

#[derive(Debug, Clone)]
pub struct Expectation {
    pub task: String,
    pub check: ExpectCheck,
    /// The check as written.
    pub text: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub ctx: JetContext,
    pub equations: Vec<EquationDecl>,
    pub fields: Vec<FieldDecl>,
    pub maps: Vec<MapDecl>,
    pub assumptions: Vec<Assumption>,
    pub ansatze: Vec<AnsatzDecl>,
    pub realizations: Vec<RealizationDecl>,
    pub tasks: Vec<TaskRequest>,
    pub expectations: Vec<Expectation>,
}

impl ProblemSpec {
    pub fn field(&self, name: &str) -> Option<&VectorField> {
        self.fields.iter().map(|f| &f.field).find(|f| f.name == name)
    }

    pub fn map(&self, name: &str) -> Option<&MapDecl> {
        self.maps.iter().find(|m| m.name == name)
    }

    pub fn ansatz(&self, name: &str) -> Option<&Ansatz> {
        self.ansatze.iter().map(|a| &a.ansatz).find(|a| a.name == name)
    }

    pub fn task(&self, name: &str) -> Option<&TaskRequest> {
        self.tasks.iter().find(|t| t.name == name)
    }
}
