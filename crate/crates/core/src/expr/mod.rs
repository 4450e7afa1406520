//! Immutable symbolic expressions over exact rationals.
//!
//! Every [`Expr`] built through the public constructors is kept in canonical
//! form: an expanded sum of monomials whose atoms are symbols, elementary
//! function applications, uninterpreted function applications, powers of
//! irreducible sums (denominators and roots) and roots of rational numbers.
//! Structural equality of canonical forms is the engine's notion of
//! syntactic equality.
//!
//! The `raw_*` constructors bypass canonicalization; they exist so that
//! arbitrary trees can be fed to [`Expr::normalize`].

mod canon;
mod diff;
mod eval;
mod factor;
mod print;
mod subst;
mod symbol;
mod zero;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub use eval::{Compiled, CubicPoly, EvalError, FunctionTable, Realization};
pub use factor::factor_split;
pub use subst::Substitution;
pub use symbol::{MultiIndex, Symbol, SymbolKind};
pub use zero::{is_zero, SampleBox, ZeroMode, ZeroOptions, ZeroStatus, ZeroVerdict};

pub type Rational = BigRational;

/// Shorthand for the rational `n/d`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExprError {
    #[error("malformed expression: division by zero")]
    DivisionByZero,
    #[error("cyclic substitution among rules: {0}")]
    CyclicSubstitution(String),
    #[error("numeric sampling failed after {attempts} attempts")]
    SamplingFailure { attempts: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = ExprError> = std::result::Result<T, E>;

/// Elementary functions known to the kernel. `sqrt` is represented as a
/// power with exponent 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElemFn {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Sech,
}

impl ElemFn {
    pub const ALL: [ElemFn; 9] = [
        ElemFn::Exp,
        ElemFn::Log,
        ElemFn::Sin,
        ElemFn::Cos,
        ElemFn::Tan,
        ElemFn::Sinh,
        ElemFn::Cosh,
        ElemFn::Tanh,
        ElemFn::Sech,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ElemFn::Exp => "exp",
            ElemFn::Log => "log",
            ElemFn::Sin => "sin",
            ElemFn::Cos => "cos",
            ElemFn::Tan => "tan",
            ElemFn::Sinh => "sinh",
            ElemFn::Cosh => "cosh",
            ElemFn::Tanh => "tanh",
            ElemFn::Sech => "sech",
        }
    }

    pub fn from_name(name: &str) -> Option<ElemFn> {
        ElemFn::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Application of an uninterpreted function, possibly differentiated:
/// `name^(derivs)(args)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FuncApp {
    pub name: Arc<str>,
    pub derivs: Vec<u32>,
    pub args: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Num(Rational),
    Sym(Symbol),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, Rational),
    Func(ElemFn, Expr),
    Apply(FuncApp),
}

impl Node {
    fn rank(&self) -> u8 {
        match self {
            Node::Num(_) => 0,
            Node::Sym(_) => 1,
            Node::Pow(..) => 2,
            Node::Mul(_) => 3,
            Node::Add(_) => 4,
            Node::Func(..) => 5,
            Node::Apply(_) => 6,
        }
    }
}

#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn from_node(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    // ---- leaves -------------------------------------------------------

    pub fn num(q: Rational) -> Expr {
        Expr::from_node(Node::Num(q))
    }

    pub fn int(i: i64) -> Expr {
        Expr::num(Rational::from_integer(BigInt::from(i)))
    }

    pub fn rational(n: i64, d: i64) -> Expr {
        Expr::num(Rational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn sym(s: Symbol) -> Expr {
        Expr::from_node(Node::Sym(s))
    }

    // ---- canonical constructors ----------------------------------------

    pub fn add<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        canon::add_all(terms)
    }

    pub fn mul<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        canon::mul_all(factors)
    }

    pub fn pow(base: &Expr, exponent: Rational) -> Result<Expr> {
        canon::pow(base, &exponent)
    }

    pub fn powi(base: &Expr, exponent: i64) -> Result<Expr> {
        canon::pow(base, &Rational::from_integer(BigInt::from(exponent)))
    }

    pub fn sqrt(arg: &Expr) -> Result<Expr> {
        Expr::pow(arg, Rational::new(BigInt::from(1), BigInt::from(2)))
    }

    pub fn recip(&self) -> Result<Expr> {
        Expr::powi(self, -1)
    }

    pub fn checked_div(&self, other: &Expr) -> Result<Expr> {
        Ok(self * &other.recip()?)
    }

    pub fn func(f: ElemFn, arg: Expr) -> Expr {
        canon::func(f, arg)
    }

    pub fn apply(name: impl Into<Arc<str>>, derivs: Vec<u32>, args: Vec<Expr>) -> Expr {
        Expr::from_node(Node::Apply(FuncApp {
            name: name.into(),
            derivs,
            args,
        }))
    }

    /// Uninterpreted `name(args)` with no derivatives.
    pub fn call(name: impl Into<Arc<str>>, args: Vec<Expr>) -> Expr {
        let n = args.len();
        Expr::apply(name, vec![0; n], args)
    }

    // ---- raw (non-canonical) constructors ------------------------------

    pub fn raw_add(terms: Vec<Expr>) -> Expr {
        Expr::from_node(Node::Add(terms))
    }

    pub fn raw_mul(factors: Vec<Expr>) -> Expr {
        Expr::from_node(Node::Mul(factors))
    }

    pub fn raw_pow(base: Expr, exponent: Rational) -> Expr {
        Expr::from_node(Node::Pow(base, exponent))
    }

    pub fn raw_func(f: ElemFn, arg: Expr) -> Expr {
        Expr::from_node(Node::Func(f, arg))
    }

    /// Rebuilds `self` bottom-up through the canonical constructors.
    pub fn normalize(&self) -> Result<Expr> {
        Ok(match self.node() {
            Node::Num(_) | Node::Sym(_) => self.clone(),
            Node::Add(ts) => Expr::add(ts.iter().map(Expr::normalize).collect::<Result<Vec<_>>>()?),
            Node::Mul(fs) => Expr::mul(fs.iter().map(Expr::normalize).collect::<Result<Vec<_>>>()?),
            Node::Pow(b, k) => Expr::pow(&b.normalize()?, k.clone())?,
            Node::Func(f, a) => Expr::func(*f, a.normalize()?),
            Node::Apply(app) => Expr::apply(
                app.name.clone(),
                app.derivs.clone(),
                app.args.iter().map(Expr::normalize).collect::<Result<Vec<_>>>()?,
            ),
        })
    }

    // ---- queries -------------------------------------------------------

    pub fn as_num(&self) -> Option<&Rational> {
        match self.node() {
            Node::Num(q) => Some(q),
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        match self.node() {
            Node::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num().is_some_and(Zero::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_num().is_some_and(One::is_one)
    }

    /// Direct children, in order.
    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Num(_) | Node::Sym(_) => vec![],
            Node::Add(xs) | Node::Mul(xs) => xs.iter().collect(),
            Node::Pow(b, _) => vec![b],
            Node::Func(_, a) => vec![a],
            Node::Apply(app) => app.args.iter().collect(),
        }
    }

    pub fn visit_symbols(&self, f: &mut impl FnMut(&Symbol)) {
        match self.node() {
            Node::Sym(s) => f(s),
            _ => {
                for c in self.children() {
                    c.visit_symbols(f);
                }
            }
        }
    }

    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit_symbols(&mut |s| {
            out.insert(s.clone());
        });
        out
    }

    pub fn jet_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit_symbols(&mut |s| {
            if s.is_jet() {
                out.insert(s.clone());
            }
        });
        out
    }

    pub fn contains_symbol(&self, s: &Symbol) -> bool {
        match self.node() {
            Node::Sym(t) => t == s,
            Node::Num(_) => false,
            _ => self.children().into_iter().any(|c| c.contains_symbol(s)),
        }
    }

    /// Names of uninterpreted functions applied anywhere in the tree.
    pub fn function_names(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        fn walk(e: &Expr, out: &mut BTreeSet<Arc<str>>) {
            if let Node::Apply(app) = e.node() {
                out.insert(app.name.clone());
            }
            for c in e.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Highest jet order occurring in the expression.
    pub fn jet_order(&self) -> u32 {
        self.jet_symbols().iter().map(Symbol::jet_order).max().unwrap_or(0)
    }

    /// Splits a canonical expression into its rational coefficient and the
    /// remaining (monic) part: `self == coeff * rest`.
    pub fn coefficient_split(&self) -> (Rational, Expr) {
        canon::coefficient_split(self)
    }

    /// If `self == q * other` for a nonzero rational `q`, returns `q`.
    pub fn rational_multiple_of(&self, other: &Expr) -> Option<Rational> {
        if self.is_zero() && other.is_zero() {
            return Some(Rational::one());
        }
        let (c1, r1) = self.coefficient_split();
        let (c2, r2) = other.coefficient_split();
        if r1 == r2 && !c2.is_zero() && !c1.is_zero() {
            Some(c1 / c2)
        } else {
            None
        }
    }

    pub fn is_negative_term(&self) -> bool {
        match self.node() {
            Node::Num(q) => q.is_negative(),
            Node::Mul(fs) => fs.first().and_then(Expr::as_num).is_some_and(Signed::is_negative),
            _ => false,
        }
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let (a, b) = (self.node(), other.node());
        a.rank().cmp(&b.rank()).then_with(|| match (a, b) {
            (Node::Num(p), Node::Num(q)) => p.cmp(q),
            (Node::Sym(s), Node::Sym(t)) => s.cmp(t),
            (Node::Pow(b1, k1), Node::Pow(b2, k2)) => b1.cmp(b2).then_with(|| k1.cmp(k2)),
            (Node::Mul(x), Node::Mul(y)) | (Node::Add(x), Node::Add(y)) => x.cmp(y),
            (Node::Func(f, x), Node::Func(g, y)) => f.cmp(g).then_with(|| x.cmp(y)),
            (Node::Apply(x), Node::Apply(y)) => x.cmp(y),
            _ => Ordering::Equal,
        })
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl From<Symbol> for Expr {
    fn from(s: Symbol) -> Self {
        Expr::sym(s)
    }
}

impl From<i64> for Expr {
    fn from(i: i64) -> Self {
        Expr::int(i)
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $body:expr) => {
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl std::ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                std::ops::$tr::$method(&self, &rhs)
            }
        }
        impl std::ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                std::ops::$tr::$method(&self, rhs)
            }
        }
        impl std::ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                std::ops::$tr::$method(self, &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| canon::add2(a, b));
binop!(Sub, sub, |a, b| canon::add2(a, &canon::scale(b, &-Rational::one())));
binop!(Mul, mul, |a, b| canon::mul2(a, b));

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        canon::scale(self, &-Rational::one())
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl Expr {
    pub fn scale(&self, q: &Rational) -> Expr {
        canon::scale(self, q)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn x() -> Symbol {
        Symbol::independent("x", 0)
    }
    pub fn y() -> Symbol {
        Symbol::independent("y", 1)
    }
    pub fn jet(name: &str, counts: &[u32]) -> Symbol {
        Symbol::new(
            name,
            SymbolKind::Jet {
                dep: 0,
                index: MultiIndex::from_counts(counts.to_vec()),
            },
        )
    }
    pub fn e(s: &Symbol) -> Expr {
        Expr::sym(s.clone())
    }
    pub fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }
}
