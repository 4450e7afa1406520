use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_traits::{Pow, Zero};

use crate::expr::{ElemFn, Expr, Rational, Symbol, SymbolKind};
use crate::jet::{JetContext, VectorField};
use crate::verify::Ansatz;

use super::lexer::{lex, Tok, Token};
use super::*;

type PResult<T> = Result<T, Diagnostic>;

const LAMBDA: &str = "lambda";

const RESERVED: [&str; 4] = [LAMBDA, "sqrt", "xi", "phi"];

fn group_parameter() -> Symbol {
    Symbol::new(LAMBDA, SymbolKind::GroupParameter)
}

/// Exact value of a decimal literal such as `1.5e-3`.
fn decimal(text: &str) -> Option<Rational> {
    let (mant, exp) = match text.find(['e', 'E']) {
        Some(k) => (&text[..k], text[k + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits = format!("{int}{frac}");
    let n: BigInt = if digits.is_empty() { return None } else { digits.parse().ok()? };
    let shift = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    Some(if shift >= 0 {
        Rational::from_integer(n * Pow::pow(&ten, shift as u32))
    } else {
        Rational::new(n, Pow::pow(&ten, (-shift) as u32))
    })
}

/// Where an expression is being read; restricts which symbols resolve.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    /// Equations, fields, assumptions.
    Problem,
    /// Ansätze and maps may use the group parameter.
    Family,
    /// A function body sees only its own parameters.
    Body,
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    ctx: JetContext,
    locals: HashMap<String, Symbol>,
    scope: Scope,
}

fn err<T>(kind: DiagKind, span: SourceSpan, message: impl Into<String>) -> PResult<T> {
    Err(Diagnostic {
        kind,
        message: message.into(),
        span,
    })
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, toks: Vec<Token>, ctx: JetContext) -> Self {
        Parser {
            src,
            toks,
            pos: 0,
            ctx,
            locals: HashMap::new(),
            scope: Scope::Problem,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> SourceSpan {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> PResult<SourceSpan> {
        if self.peek() == t {
            Ok(self.bump().span)
        } else {
            err(DiagKind::Syntax, self.span(), format!("expected {}, found {}", t.describe(), self.peek().describe()))
        }
    }

    fn ident(&mut self) -> PResult<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.bump().span)),
            t => err(DiagKind::Syntax, self.span(), format!("expected identifier, found {}", t.describe())),
        }
    }

    fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    fn text(&self, from: SourceSpan, to: SourceSpan) -> String {
        self.src[from.begin..to.end].to_string()
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<Expr> {
        self.expr_bp(0)
    }

    fn expr_bp(&mut self, min: u8) -> PResult<Expr> {
        let start = self.span();
        let mut lhs = match self.peek() {
            Tok::Minus => {
                self.bump();
                -self.expr_bp(25)?
            }
            Tok::Plus => {
                self.bump();
                self.expr_bp(25)?
            }
            _ => self.primary()?,
        };
        loop {
            let (l, r) = match self.peek() {
                Tok::Plus | Tok::Minus => (10, 11),
                Tok::Star | Tok::Slash => (20, 21),
                Tok::Caret => (31, 30),
                _ => break,
            };
            if l < min {
                break;
            }
            let op = self.bump().tok;
            let rhs_start = self.span();
            let rhs = self.expr_bp(r)?;
            lhs = match op {
                Tok::Plus => &lhs + &rhs,
                Tok::Minus => &lhs - &rhs,
                Tok::Star => &lhs * &rhs,
                Tok::Slash => match lhs.checked_div(&rhs) {
                    Ok(e) => e,
                    Err(_) => return err(DiagKind::Semantic, rhs_start.to(self.prev_span()), "division by zero"),
                },
                _ => {
                    let Some(k) = rhs.as_num() else {
                        return err(DiagKind::Semantic, rhs_start.to(self.prev_span()), "exponent must be a rational constant");
                    };
                    match Expr::pow(&lhs, k.clone()) {
                        Ok(e) => e,
                        Err(_) => return err(DiagKind::Semantic, start.to(self.prev_span()), "zero raised to a negative power"),
                    }
                }
            };
        }
        Ok(lhs)
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(&Tok::LParen)?;
        let mut out = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                out.push(self.expr()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(&Tok::Comma)?;
            }
        }
        Ok(out)
    }

    fn unsigned(&mut self) -> PResult<u32> {
        match self.peek().clone() {
            Tok::Number(n) if n.chars().all(|c| c.is_ascii_digit()) => {
                let sp = self.bump().span;
                n.parse().or_else(|_| err(DiagKind::Syntax, sp, "integer too large"))
            }
            t => err(DiagKind::Syntax, self.span(), format!("expected a nonnegative integer, found {}", t.describe())),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let sp = self.span();
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                let q = decimal(&n).ok_or_else(|| Diagnostic {
                    kind: DiagKind::Lexical,
                    message: format!("malformed number `{n}`"),
                    span: sp,
                })?;
                Ok(Expr::num(q))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                self.identifier(&name, sp)
            }
            t => err(DiagKind::Syntax, sp, format!("expected an expression, found {}", t.describe())),
        }
    }

    fn one_arg(&mut self, name: &str, sp: SourceSpan) -> PResult<Expr> {
        let mut a = self.args()?;
        if a.len() != 1 {
            return err(DiagKind::Arity, sp.to(self.prev_span()), format!("`{name}` takes 1 argument, got {}", a.len()));
        }
        Ok(a.pop().expect("one argument"))
    }

    fn identifier(&mut self, name: &str, sp: SourceSpan) -> PResult<Expr> {
        if let Some(s) = self.locals.get(name) {
            return Ok(Expr::sym(s.clone()));
        }
        let call = matches!(self.peek(), Tok::LParen | Tok::Prime);
        if call {
            if let Some(f) = ElemFn::from_name(name) {
                return Ok(Expr::func(f, self.one_arg(name, sp)?));
            }
            if name == "sqrt" {
                let a = self.one_arg(name, sp)?;
                return Expr::sqrt(&a).or_else(|_| err(DiagKind::Semantic, sp, "square root failed"));
            }
            if let Some(&arity) = self.ctx.functions().get(name) {
                return self.application(name, arity, sp);
            }
            if let Some(i) = name.strip_prefix('D').and_then(|v| self.ctx.independent_index(v)) {
                if self.scope == Scope::Body {
                    return err(DiagKind::Semantic, sp, "total derivatives are not allowed in function bodies");
                }
                let a = self.one_arg(name, sp)?;
                return Ok(self.ctx.total_derivative(&a, i));
            }
        }
        if self.scope == Scope::Body {
            return err(DiagKind::Undeclared, sp, format!("undeclared symbol {name} (function bodies see only their parameters)"));
        }
        if name == LAMBDA {
            if self.scope == Scope::Family {
                return Ok(Expr::sym(group_parameter()));
            }
            return err(DiagKind::Semantic, sp, "the group parameter `lambda` may only appear in ansatz and map declarations");
        }
        if let Some(s) = self.ctx.resolve(name) {
            return Ok(Expr::sym(s));
        }
        if self.ctx.functions().contains_key(name) {
            return err(DiagKind::Syntax, sp, format!("function `{name}` needs arguments"));
        }
        err(DiagKind::Undeclared, sp, format!("undeclared symbol {name}"))
    }

    /// `g(u)`, `g'(u)`, `g''(u)` and `R'[1,0](u, v)`.
    fn application(&mut self, name: &str, arity: usize, sp: SourceSpan) -> PResult<Expr> {
        let mut primes = 0u32;
        let mut derivs = None;
        while self.eat(&Tok::Prime) {
            primes += 1;
            if self.eat(&Tok::LBracket) {
                let mut ds = vec![self.unsigned()?];
                while self.eat(&Tok::Comma) {
                    ds.push(self.unsigned()?);
                }
                self.expect(&Tok::RBracket)?;
                if primes != 1 {
                    return err(DiagKind::Syntax, sp.to(self.prev_span()), "use either primes or one derivative list");
                }
                derivs = Some(ds);
                break;
            }
        }
        let args = self.args()?;
        let full = sp.to(self.prev_span());
        if args.len() != arity {
            return err(DiagKind::Arity, full, format!("`{name}` takes {arity} argument(s), got {}", args.len()));
        }
        let derivs = match derivs {
            Some(ds) => ds,
            None if primes == 0 => vec![0; arity],
            None if arity == 1 => vec![primes],
            None => return err(DiagKind::Arity, full, format!("`{name}` has {arity} arguments; write {name}'[..] with one order per argument")),
        };
        if derivs.len() != arity {
            return err(DiagKind::Arity, full, format!("`{name}` takes {arity} derivative orders, got {}", derivs.len()));
        }
        Ok(Expr::apply(name, derivs, args))
    }

    fn number(&mut self) -> PResult<f64> {
        let neg = self.eat(&Tok::Minus);
        let sp = self.span();
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                let v: f64 = n.parse().or_else(|_| err(DiagKind::Lexical, sp, format!("malformed number `{n}`")))?;
                Ok(if neg { -v } else { v })
            }
            t => err(DiagKind::Syntax, sp, format!("expected a number, found {}", t.describe())),
        }
    }

    fn range(&mut self) -> PResult<(f64, f64)> {
        let sp = self.span();
        let a = self.number()?;
        self.expect(&Tok::DotDot)?;
        let b = self.number()?;
        if !(a < b) {
            return err(DiagKind::Semantic, sp.to(self.prev_span()), "empty range");
        }
        Ok((a, b))
    }
}

// ---- statements ----

#[derive(Default)]
struct Builder {
    equations: Vec<EquationDecl>,
    fields: Vec<FieldDecl>,
    maps: Vec<MapDecl>,
    assumptions: Vec<Assumption>,
    ansatze: Vec<AnsatzDecl>,
    realizations: Vec<RealizationDecl>,
    tasks: Vec<TaskRequest>,
    expectations: Vec<Expectation>,
    /// Equation, field, map, ansatz and task names share one namespace.
    entities: BTreeSet<String>,
}

impl Parser<'_> {
    fn symbol_taken(&self, name: &str) -> bool {
        self.ctx.resolve(name).is_some() || self.ctx.functions().contains_key(name)
    }

    fn declare_name(&mut self) -> PResult<(String, SourceSpan)> {
        let (name, sp) = self.ident()?;
        if RESERVED.contains(&name.as_str()) || ElemFn::from_name(&name).is_some() {
            return err(DiagKind::Semantic, sp, format!("`{name}` is reserved"));
        }
        if self.symbol_taken(&name) {
            return err(DiagKind::Duplicate, sp, format!("`{name}` is already declared"));
        }
        Ok((name, sp))
    }

    fn entity_name(&mut self, b: &mut Builder) -> PResult<(String, SourceSpan)> {
        let (name, sp) = self.ident()?;
        if !b.entities.insert(name.clone()) {
            return err(DiagKind::Duplicate, sp, format!("`{name}` is already declared"));
        }
        Ok((name, sp))
    }

    fn name_list(&mut self, mut declare: impl FnMut(&mut JetContext, &str)) -> PResult<()> {
        loop {
            let (name, _) = self.declare_name()?;
            declare(&mut self.ctx, &name);
            if !self.eat(&Tok::Comma) {
                return Ok(());
            }
        }
    }

    fn end(&mut self) -> PResult<()> {
        self.expect(&Tok::Semi).map(|_| ())
    }

    fn statement(&mut self, b: &mut Builder) -> PResult<()> {
        let start = self.span();
        let (head, hsp) = self.ident()?;
        match head.as_str() {
            "independent" => {
                if !self.ctx.dependents().is_empty() {
                    return err(DiagKind::Semantic, hsp, "independent variables must be declared before dependent ones");
                }
                self.name_list(|c, n| {
                    c.add_independent(n);
                })?
            }
            "dependent" => self.name_list(|c, n| {
                c.add_dependent(n);
            })?,
            "parameter" => self.name_list(|c, n| {
                c.add_parameter(n);
            })?,
            "constantspace" => self.name_list(|c, n| {
                c.add_constant(n);
            })?,
            "function" => self.function(b)?,
            "equation" => self.equation(b, start)?,
            "solvefor" => {
                let (name, sp) = self.ident()?;
                self.expect(&Tok::Colon)?;
                let lead = self.jet_coordinate()?;
                let Some(eq) = b.equations.iter_mut().find(|e| e.name == name) else {
                    return err(DiagKind::Undeclared, sp, format!("no equation named `{name}`"));
                };
                check_solvefor(eq, &lead, sp)?;
                eq.solvefor = Some(lead);
            }
            "vectorfield" => self.point_field(b, start)?,
            "generalizedfield" => self.generalized_field(b, start)?,
            "discretemap" => self.discrete_map(b, start)?,
            "assume" => self.assume(b, start)?,
            "ansatz" => self.ansatz(b, start)?,
            "task" => self.task(b, start)?,
            "expect" => self.expectation(b, start)?,
            other => return err(DiagKind::Syntax, hsp, format!("unknown statement `{other}`")),
        }
        self.end()
    }

    /// `function g(v), R(p, q) = p*q;`
    fn function(&mut self, b: &mut Builder) -> PResult<()> {
        loop {
            let (name, _) = self.declare_name()?;
            self.expect(&Tok::LParen)?;
            let mut params = Vec::new();
            loop {
                let (p, psp) = self.ident()?;
                if params.iter().any(|(q, _): &(String, Symbol)| *q == p) {
                    return err(DiagKind::Duplicate, psp, format!("parameter `{p}` repeated"));
                }
                params.push((p.clone(), Symbol::parameter(p)));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen)?;
            self.ctx.add_function(&name, params.len());
            if self.eat(&Tok::Eq) {
                self.locals = params.iter().cloned().collect();
                self.scope = Scope::Body;
                let body = self.expr();
                self.locals.clear();
                self.scope = Scope::Problem;
                b.realizations.push(RealizationDecl {
                    name: name.clone(),
                    params: params.into_iter().map(|(_, s)| s).collect(),
                    body: body?,
                });
            }
            if !self.eat(&Tok::Comma) {
                return Ok(());
            }
        }
    }

    fn jet_coordinate(&mut self) -> PResult<Symbol> {
        let sp = self.span();
        let e = self.expr()?;
        match e.as_symbol() {
            Some(s) if s.is_jet() => Ok(s.clone()),
            _ => err(DiagKind::Semantic, sp.to(self.prev_span()), format!("`{e}` is not a jet coordinate")),
        }
    }

    fn equation(&mut self, b: &mut Builder, start: SourceSpan) -> PResult<()> {
        let (name, _) = self.entity_name(b)?;
        self.expect(&Tok::Colon)?;
        let lhs = self.expr()?;
        self.expect(&Tok::Eq)?;
        let rhs = self.expr()?;
        let mut eq = EquationDecl {
            name,
            expr: &lhs - &rhs,
            solvefor: None,
            span: start,
        };
        if self.is_ident("solvefor") {
            let sp = self.bump().span;
            let lead = self.jet_coordinate()?;
            check_solvefor(&eq, &lead, sp.to(self.prev_span()))?;
            eq.solvefor = Some(lead);
        }
        eq.span = start.to(self.prev_span());
        b.equations.push(eq);
        Ok(())
    }

    /// Whether the next tokens open another `xi(..)`/`phi(..)` clause.
    fn clause_ahead(&self, heads: &[&str]) -> bool {
        matches!(self.peek(), Tok::Ident(s) if heads.contains(&s.as_str())) && *self.peek_at(1) == Tok::LParen
    }

    fn clauses(&mut self, heads: &[&str]) -> PResult<Vec<(String, String, SourceSpan, Expr)>> {
        let mut out: Vec<(String, String, SourceSpan, Expr)> = Vec::new();
        loop {
            let (head, hsp) = self.ident()?;
            if !heads.contains(&head.as_str()) {
                return err(DiagKind::Syntax, hsp, format!("expected one of {}, found `{head}`", heads.join(", ")));
            }
            self.expect(&Tok::LParen)?;
            let (var, _) = self.ident()?;
            self.expect(&Tok::RParen)?;
            let sp = hsp.to(self.prev_span());
            if out.iter().any(|(h, v, _, _)| *h == head && *v == var) {
                return err(DiagKind::Duplicate, sp, format!("{head}({var}) given twice"));
            }
            self.expect(&Tok::Eq)?;
            let e = self.expr()?;
            out.push((head, var, sp, e));
            // a `;` may separate clauses; it ends the statement otherwise
            if self.eat(&Tok::Comma) {
                continue;
            }
            if *self.peek() == Tok::Semi && {
                let save = self.pos;
                self.bump();
                let more = self.clause_ahead(heads);
                if !more {
                    self.pos = save;
                }
                more
            } {
                continue;
            }
            return Ok(out);
        }
    }

    fn point_field(&mut self, b: &mut Builder, start: SourceSpan) -> PResult<()> {
        let (name, _) = self.entity_name(b)?;
        self.expect(&Tok::Colon)?;
        let mut xi = vec![Expr::zero(); self.ctx.dim()];
        let mut phi = vec![Expr::zero(); self.ctx.dependents().len()];
        for (head, var, sp, e) in self.clauses(&["xi", "phi"])? {
            let slot = if head == "xi" {
                self.ctx.independent_index(&var).map(|i| &mut xi[i])
            } else {
                self.ctx.dependent_index(&var).map(|i| &mut phi[i])
            };
            match slot {
                Some(s) => *s = e,
                None => {
                    let what = if head == "xi" { "independent" } else { "dependent" };
                    return err(DiagKind::Undeclared, sp, format!("undeclared symbol {var} ({what} variable expected)"));
                }
            }
        }
        let field = VectorField::point(name, xi, phi).or_else(|e| err(DiagKind::Semantic, start.to(self.prev_span()), e.to_string()))?;
        b.fields.push(FieldDecl {
            field,
            span: start.to(self.prev_span()),
        });
        Ok(())
    }

    fn generalized_field(&mut self, b: &mut Builder, start: SourceSpan) -> PResult<()> {
        let (name, _) = self.entity_name(b)?;
        self.expect(&Tok::Colon)?;
        let mut q = vec![Expr::zero(); self.ctx.dependents().len()];
        for (_, var, sp, e) in self.clauses(&["phi"])? {
            match self.ctx.dependent_index(&var) {
                Some(i) => q[i] = e,
                None => return err(DiagKind::Undeclared, sp, format!("undeclared symbol {var} (dependent variable expected)")),
            }
        }
        let field = VectorField::generalized(name, q).or_else(|e| err(DiagKind::Semantic, start.to(self.prev_span()), e.to_string()))?;
        b.fields.push(FieldDecl {
            field,
            span: start.to(self.prev_span()),
        });
        Ok(())
    }

    /// `discretemap R: x -> -x, y -> y, u -> u period 2;`
    fn discrete_map(&mut self, b: &mut Builder, start: SourceSpan) -> PResult<()> {
        let (name, _) = self.entity_name(b)?;
        self.expect(&Tok::Colon)?;
        let mut to_x: Vec<Option<Expr>> = vec![None; self.ctx.dim()];
        let mut to_u: Vec<Option<Expr>> = vec![None; self.ctx.dependents().len()];
        self.scope = Scope::Family;
        let res = (|| {
            loop {
                let (var, sp) = self.ident()?;
                self.expect(&Tok::Arrow)?;
                let e = self.expr()?;
                let slot = match (self.ctx.independent_index(&var), self.ctx.dependent_index(&var)) {
                    (Some(i), _) => &mut to_x[i],
                    (_, Some(a)) => &mut to_u[a],
                    _ => return err(DiagKind::Undeclared, sp, format!("undeclared symbol {var}")),
                };
                if slot.replace(e).is_some() {
                    return err(DiagKind::Duplicate, sp, format!("image of {var} given twice"));
                }
                if !self.eat(&Tok::Comma) {
                    return Ok(());
                }
            }
        })();
        self.scope = Scope::Problem;
        res?;
        let mut period = None;
        if self.is_ident("period") {
            self.bump();
            period = Some(self.unsigned()?);
        }
        let span = start.to(self.prev_span());
        let missing: Vec<String> = to_x
            .iter()
            .zip(self.ctx.independents())
            .filter(|(e, _)| e.is_none())
            .map(|(_, s)| s.name().to_string())
            .chain(to_u.iter().zip(self.ctx.dependents()).filter(|(e, _)| e.is_none()).map(|(_, s)| s.clone()))
            .collect();
        if !missing.is_empty() {
            return err(DiagKind::Semantic, span, format!("map `{name}` gives no image for {}", missing.join(", ")));
        }
        let decl = MapDecl {
            name,
            to_x: to_x.into_iter().map(Option::unwrap).collect(),
            to_u: to_u.into_iter().map(Option::unwrap).collect(),
            period,
            span,
        };
        if let Err(e) = decl.build(&self.ctx) {
            return err(DiagKind::Semantic, span, e.to_string());
        }
        b.maps.push(decl);
        Ok(())
    }

    fn assume(&mut self, b: &mut Builder, start: SourceSpan) -> PResult<()> {
        if self.is_ident("nonzero") {
            self.bump();
            let from = self.span();
            let e = self.expr()?;
            let stated = format!("nonzero {}", self.text(from, self.prev_span()));
            if e.is_zero() {
                return err(DiagKind::Semantic, from.to(self.prev_span()), "assumed nonzero expression is zero");
            }
            b.assumptions.push(Assumption {
                kind: AssumptionKind::Nonzero(e),
                stated,
                span: start.to(self.prev_span()),
            });
            return Ok(());
        }
        let from = self.span();
        let lhs = self.expr()?;
        self.expect(&Tok::Eq)?;
        let rhs = self.expr()?;
        let span = start.to(self.prev_span());
        let stated = self.text(from, self.prev_span());
        let e = &lhs - &rhs;
        // solve for the first declared parameter occurring linearly with a
        // constant coefficient
        let solved = self.ctx.parameters().iter().find_map(|p| {
            let c = e.diff(p);
            let q = c.as_num()?;
            if q.is_zero() {
                return None;
            }
            let rest = &e - &(&c * &Expr::sym(p.clone()));
            let value = (-rest).scale(&q.recip());
            Some((p.clone(), value))
        });
        let Some((param, value)) = solved else {
            return err(DiagKind::Semantic, span, "assumption must be linear in some parameter with a constant coefficient");
        };
        if !value.jet_symbols().is_empty() || value.free_symbols().iter().any(|s| s.is_independent()) {
            return err(DiagKind::Semantic, span, "parameter assumptions may involve parameters only");
        }
        b.assumptions.push(Assumption {
            kind: AssumptionKind::Parameter { param, value },
            stated,
            span,
        });
        Ok(())
    }

    /// `ansatz A: u = expr, v = expr domain x = 0..1, t = 1..2;`
    fn ansatz(&mut self, b: &mut Builder, start: SourceSpan) -> PResult<()> {
        let (name, _) = self.entity_name(b)?;
        self.expect(&Tok::Colon)?;
        let mut u: Vec<Option<Expr>> = vec![None; self.ctx.dependents().len()];
        self.scope = Scope::Family;
        let res = (|| loop {
            let (var, sp) = self.ident()?;
            let Some(a) = self.ctx.dependent_index(&var) else {
                return err(DiagKind::Undeclared, sp, format!("undeclared symbol {var} (dependent variable expected)"));
            };
            self.expect(&Tok::Eq)?;
            let e = self.expr()?;
            if u[a].replace(e).is_some() {
                return err(DiagKind::Duplicate, sp, format!("{var} given twice"));
            }
            if !self.eat(&Tok::Comma) {
                return Ok(());
            }
        })();
        self.scope = Scope::Problem;
        res?;
        let mut domain = BTreeMap::new();
        if self.is_ident("domain") {
            self.bump();
            loop {
                let (var, sp) = self.ident()?;
                let Some(s) = self.ctx.resolve(&var).filter(|s| s.is_independent() || s.is_parametric()) else {
                    return err(DiagKind::Undeclared, sp, format!("undeclared symbol {var} (independent variable, parameter or constant expected)"));
                };
                self.expect(&Tok::Eq)?;
                domain.insert(s, self.range()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        let span = start.to(self.prev_span());
        let missing: Vec<&str> = u.iter().zip(self.ctx.dependents()).filter(|(e, _)| e.is_none()).map(|(_, s)| s.as_str()).collect();
        if !missing.is_empty() {
            return err(DiagKind::Semantic, span, format!("ansatz `{name}` gives no expression for {}", missing.join(", ")));
        }
        let u: Vec<Expr> = u.into_iter().map(Option::unwrap).collect();
        if let Some(e) = u.iter().find(|e| !e.jet_symbols().is_empty()) {
            return err(DiagKind::Semantic, span, format!("ansatz component `{e}` involves dependent variables"));
        }
        let mut free = BTreeSet::new();
        for e in &u {
            free.extend(e.free_symbols());
        }
        let constants: Vec<Symbol> = free.iter().filter(|s| *s.kind() == SymbolKind::Constant).cloned().collect();
        let mut a = Ansatz::new(name, u).with_constants(constants);
        a.domain = domain;
        if free.contains(&group_parameter()) {
            a = a.with_group(group_parameter());
        }
        b.ansatze.push(AnsatzDecl { ansatz: a, span });
        Ok(())
    }

    /// A hyphenated word such as `discrete-chain`.
    fn word(&mut self) -> PResult<(String, SourceSpan)> {
        let (mut w, mut sp) = self.ident()?;
        while *self.peek() == Tok::Minus && matches!(self.peek_at(1), Tok::Ident(_)) && self.toks[self.pos + 1].span.begin == self.span().end {
            self.bump();
            let (more, msp) = self.ident()?;
            w.push('-');
            w.push_str(&more);
            sp = sp.to(msp);
        }
        Ok((w, sp))
    }

    fn task(&mut self, b: &mut Builder, start: SourceSpan) -> PResult<()> {
        let (name, _) = self.entity_name(b)?;
        self.expect(&Tok::Colon)?;
        let (kind_name, ksp) = self.word()?;
        let Some(kind) = TaskKind::from_name(&kind_name) else {
            let all: Vec<&str> = TaskKind::ALL.iter().map(|k| k.name()).collect();
            return err(DiagKind::Syntax, ksp, format!("unknown task kind `{kind_name}` (expected one of {})", all.join(", ")));
        };
        let mut t = TaskRequest {
            name,
            kind,
            options: BTreeMap::new(),
            bindings: BTreeMap::new(),
            ranges: BTreeMap::new(),
            assumptions: b.assumptions.len(),
            span: start,
        };
        while *self.peek() != Tok::Semi && *self.peek() != Tok::Eof {
            let (key, ksp) = self.ident()?;
            let value = if self.eat(&Tok::Eq) { self.opt_value()? } else { OptValue::Flag };
            let vsp = ksp.to(self.prev_span());
            let sym = if key == LAMBDA { Some(group_parameter()) } else { self.ctx.resolve(&key) };
            match (sym, &value) {
                (Some(s), OptValue::Range(lo, hi)) if s.is_independent() => {
                    t.ranges.insert(s, (*lo, *hi));
                    continue;
                }
                (Some(s), OptValue::Number(v)) if s.is_parametric() || *s.kind() == SymbolKind::GroupParameter => {
                    t.bindings.insert(s, *v);
                    continue;
                }
                _ => {}
            }
            if !kind.keys().contains(&key.as_str()) && key != "tol" && key != "seed" {
                return err(DiagKind::Syntax, ksp, format!("option `{key}` is not understood by {} tasks", kind.name()));
            }
            if t.options.insert(key.clone(), value).is_some() {
                return err(DiagKind::Duplicate, vsp, format!("option `{key}` given twice"));
            }
            self.check_reference(b, &t, &key, vsp)?;
        }
        for key in kind.required() {
            if !t.options.contains_key(*key) {
                return err(DiagKind::Semantic, start.to(self.prev_span()), format!("{} task `{}` needs {key}=", kind.name(), t.name));
            }
        }
        t.span = start.to(self.prev_span());
        b.tasks.push(t);
        Ok(())
    }

    fn check_reference(&self, b: &Builder, t: &TaskRequest, key: &str, sp: SourceSpan) -> PResult<()> {
        let v = &t.options[key];
        let name = match v {
            OptValue::Name(n) => Some(n.as_str()),
            _ => None,
        };
        let found = match key {
            "field" => b.fields.iter().any(|f| Some(f.field.name.as_str()) == name),
            "map" => b.maps.iter().any(|m| Some(m.name.as_str()) == name),
            "ansatz" => b.ansatze.iter().any(|a| Some(a.ansatz.name.as_str()) == name),
            "system" => b.tasks.iter().any(|p| Some(p.name.as_str()) == name && p.kind.has_chain()),
            "factor" | "zero" => name.is_some_and(|n| self.ctx.dependent_index(n).is_some()),
            "strong" => *v == OptValue::Flag,
            _ => {
                if !matches!(v, OptValue::Number(_)) {
                    return err(DiagKind::Syntax, sp, format!("option `{key}` takes a number"));
                }
                true
            }
        };
        if !found {
            let what = match key {
                "system" => "earlier chain task",
                "factor" | "zero" => "dependent variable",
                "strong" => "bare flag",
                k => k,
            };
            return err(DiagKind::Undeclared, sp, format!("`{key}` must name a declared {what}"));
        }
        Ok(())
    }

    fn opt_value(&mut self) -> PResult<OptValue> {
        match self.peek() {
            Tok::Number(_) | Tok::Minus => {
                let a = self.number()?;
                if self.eat(&Tok::DotDot) {
                    let b = self.number()?;
                    if !(a < b) {
                        return err(DiagKind::Semantic, self.prev_span(), "empty range");
                    }
                    return Ok(OptValue::Range(a, b));
                }
                Ok(OptValue::Number(a))
            }
            Tok::Ident(_) => {
                let (first, _) = self.ident()?;
                if *self.peek() != Tok::Comma {
                    return Ok(OptValue::Name(first));
                }
                let mut list = vec![first];
                while self.eat(&Tok::Comma) {
                    list.push(self.ident()?.0);
                }
                Ok(OptValue::List(list))
            }
            t => err(DiagKind::Syntax, self.span(), format!("expected an option value, found {}", t.describe())),
        }
    }

    fn expectation(&mut self, b: &mut Builder, start: SourceSpan) -> PResult<()> {
        const CHECKS: [&str; 5] = ["status", "order", "restricted", "raw", "verdict"];
        let is_check = matches!(self.peek(), Tok::Ident(s) if CHECKS.contains(&s.as_str())) && matches!(self.peek_at(1), Tok::Eq | Tok::LBracket);
        let task = if is_check {
            match b.tasks.last() {
                Some(t) => t.name.clone(),
                None => return err(DiagKind::Semantic, start, "expectation before any task"),
            }
        } else {
            let (n, sp) = self.ident()?;
            if !b.tasks.iter().any(|t| t.name == n) {
                return err(DiagKind::Undeclared, sp, format!("no earlier task named `{n}`"));
            }
            n
        };
        let from = self.span();
        let (check, csp) = self.ident()?;
        let check = match check.as_str() {
            "status" => {
                self.expect(&Tok::Eq)?;
                ExpectCheck::Status(self.word()?.0)
            }
            "order" => {
                self.expect(&Tok::Eq)?;
                ExpectCheck::Order(self.unsigned()?)
            }
            "verdict" => {
                self.expect(&Tok::Eq)?;
                let (v, vsp) = self.ident()?;
                match v.as_str() {
                    "pass" => ExpectCheck::Verdict(true),
                    "fail" => ExpectCheck::Verdict(false),
                    _ => return err(DiagKind::Syntax, vsp, "verdict is `pass` or `fail`"),
                }
            }
            "restricted" | "raw" => {
                self.expect(&Tok::LBracket)?;
                let r = self.unsigned()?;
                self.expect(&Tok::RBracket)?;
                self.expect(&Tok::Eq)?;
                let e = self.expr()?;
                if check == "raw" {
                    ExpectCheck::Raw(r, e)
                } else {
                    ExpectCheck::Restricted(r, e)
                }
            }
            other => return err(DiagKind::Syntax, csp, format!("unknown expectation `{other}`")),
        };
        b.expectations.push(Expectation {
            task,
            check,
            text: self.text(from, self.prev_span()),
            span: start.to(self.prev_span()),
        });
        Ok(())
    }

    /// Skips past the current statement, including continuation clauses.
    fn recover(&mut self) {
        loop {
            while !matches!(self.peek(), Tok::Semi | Tok::Eof) {
                self.bump();
            }
            if *self.peek() == Tok::Eof {
                return;
            }
            self.bump();
            if !self.clause_ahead(&["xi", "phi"]) {
                return;
            }
        }
    }
}

fn check_solvefor(eq: &EquationDecl, lead: &Symbol, sp: SourceSpan) -> PResult<()> {
    if !eq.expr.jet_symbols().contains(lead) {
        return err(DiagKind::Semantic, sp, format!("solvefor coordinate {lead} does not appear in equation `{}`", eq.name));
    }
    Ok(())
}

/// Parses a whole problem file. All diagnostics found are returned, in
/// source order.
pub fn parse_problem(text: &str) -> Result<ProblemSpec, Vec<Diagnostic>> {
    let toks = lex(text).map_err(|d| vec![d])?;
    let mut p = Parser::new(text, toks, JetContext::default());
    let mut b = Builder::default();
    let mut diags = Vec::new();
    while *p.peek() != Tok::Eof {
        if let Err(d) = p.statement(&mut b) {
            diags.push(d);
            p.scope = Scope::Problem;
            p.locals.clear();
            p.recover();
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(ProblemSpec {
        ctx: p.ctx,
        equations: b.equations,
        fields: b.fields,
        maps: b.maps,
        assumptions: b.assumptions,
        ansatze: b.ansatze,
        realizations: b.realizations,
        tasks: b.tasks,
        expectations: b.expectations,
    })
}

/// Parses one expression against `ctx`. `Dx(..)` applies the total
/// derivative, so on a dependent variable it yields the jet coordinate.
/// The group parameter `lambda` is accepted.
pub fn parse_expr(text: &str, ctx: &JetContext) -> Result<Expr, Diagnostic> {
    let toks = lex(text)?;
    let mut p = Parser::new(text, toks, ctx.clone());
    p.scope = Scope::Family;
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return err(DiagKind::Syntax, p.span(), format!("unexpected {} after expression", p.peek().describe()));
    }
    Ok(e)
}
