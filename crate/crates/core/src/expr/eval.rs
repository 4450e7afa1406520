use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_traits::ToPrimitive;
use rand::Rng;
use thiserror::Error;

use super::{ElemFn, Expr, Node, Rational, Symbol};
use crate::Scalar;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no value bound for symbol `{0}`")]
    UnboundSymbol(String),
    #[error("no realization for function `{0}`")]
    UnknownFunction(String),
    #[error("non-finite value while evaluating `{0}`")]
    NonFinite(String),
}

/// A dense cubic polynomial in `arity` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicPoly {
    terms: Vec<(Vec<u32>, f64)>,
}

impl CubicPoly {
    pub fn random<R: Rng + ?Sized>(arity: usize, rng: &mut R) -> Self {
        let mut exps = vec![vec![0u32; arity]];
        for _ in 0..3 {
            let mut next = Vec::new();
            for e in &exps {
                for i in 0..arity {
                    let mut f = e.clone();
                    f[i] += 1;
                    next.push(f);
                }
            }
            exps.extend(next);
        }
        exps.sort();
        exps.dedup();
        let terms = exps.into_iter().map(|e| (e, rng.gen_range(-1.0..=1.0))).collect();
        CubicPoly { terms }
    }

    pub fn from_terms(terms: Vec<(Vec<u32>, f64)>) -> Self {
        CubicPoly { terms }
    }

    pub fn eval<T: Scalar>(&self, derivs: &[u32], args: &[T]) -> T {
        let mut acc = T::zero();
        'terms: for (e, c) in &self.terms {
            let mut v = T::from_f64(*c).unwrap();
            for (i, (&k, &d)) in e.iter().zip(derivs).enumerate() {
                if d > k {
                    continue 'terms;
                }
                for j in 0..d {
                    v = v * T::from_u32(k - j).unwrap();
                }
                v = v * args[i].powi((k - d) as i32);
            }
            acc = acc + v;
        }
        acc
    }
}

/// How an uninterpreted function is evaluated numerically.
#[derive(Debug)]
pub enum Realization {
    Cubic(CubicPoly),
    /// A user-supplied body in the given formal parameters. Derivatives are
    /// taken symbolically and cached.
    Body {
        params: Vec<Symbol>,
        body: Expr,
        cache: Mutex<HashMap<Vec<u32>, Expr>>,
    },
}

impl Realization {
    pub fn body(params: Vec<Symbol>, body: Expr) -> Self {
        Realization::Body {
            params,
            body,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct FunctionTable {
    funcs: BTreeMap<Arc<str>, Arc<Realization>>,
}

impl FunctionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<Arc<str>>, r: Realization) {
        self.funcs.insert(name.into(), Arc::new(r));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.funcs.contains_key(name)
    }

    /// Fills every function in `arities` that has no realization yet with a
    /// random cubic.
    pub fn fill_random<R: Rng + ?Sized>(&mut self, arities: &BTreeMap<Arc<str>, usize>, rng: &mut R) {
        for (name, &n) in arities {
            if !self.funcs.contains_key(name) {
                self.funcs.insert(name.clone(), Arc::new(Realization::Cubic(CubicPoly::random(n, rng))));
            }
        }
    }

    fn call<T: Scalar>(&self, name: &str, derivs: &[u32], args: &[T]) -> Result<T, EvalError> {
        let r = self.funcs.get(name).ok_or_else(|| EvalError::UnknownFunction(name.to_string()))?;
        match r.as_ref() {
            Realization::Cubic(c) => Ok(c.eval(derivs, args)),
            Realization::Body { params, body, cache } => {
                let expr = {
                    let mut cache = cache.lock().unwrap_or_else(|p| p.into_inner());
                    cache
                        .entry(derivs.to_vec())
                        .or_insert_with(|| {
                            let mut e = body.clone();
                            for (p, &d) in params.iter().zip(derivs) {
                                for _ in 0..d {
                                    e = e.diff(p);
                                }
                            }
                            e
                        })
                        .clone()
                };
                let env: HashMap<Symbol, T> = params.iter().cloned().zip(args.iter().copied()).collect();
                expr.eval(&env, self)
            }
        }
    }
}

fn rat<T: Scalar>(q: &Rational) -> T {
    T::from_f64(q.to_f64().unwrap_or(f64::NAN)).unwrap()
}

fn elem<T: Scalar>(f: ElemFn, a: T) -> T {
    match f {
        ElemFn::Exp => a.exp(),
        ElemFn::Log => a.ln(),
        ElemFn::Sin => a.sin(),
        ElemFn::Cos => a.cos(),
        ElemFn::Tan => a.tan(),
        ElemFn::Sinh => a.sinh(),
        ElemFn::Cosh => a.cosh(),
        ElemFn::Tanh => a.tanh(),
        ElemFn::Sech => T::one() / a.cosh(),
    }
}

impl Expr {
    /// Evaluates with symbols bound by `env` and functions realized by
    /// `funcs`. Non-finite intermediate values are reported as errors.
    pub fn eval<T: Scalar>(&self, env: &HashMap<Symbol, T>, funcs: &FunctionTable) -> Result<T, EvalError> {
        let v = match self.node() {
            Node::Num(q) => rat(q),
            Node::Sym(s) => *env.get(s).ok_or_else(|| EvalError::UnboundSymbol(s.name().to_string()))?,
            Node::Add(ts) => {
                let mut acc = T::zero();
                for t in ts {
                    acc = acc + t.eval(env, funcs)?;
                }
                acc
            }
            Node::Mul(fs) => {
                let mut acc = T::one();
                for f in fs {
                    acc = acc * f.eval(env, funcs)?;
                }
                acc
            }
            Node::Pow(b, k) => {
                let bv = b.eval(env, funcs)?;
                if k.is_integer() {
                    bv.powi(k.to_integer().to_i32().unwrap_or(i32::MAX))
                } else if *k.denom() == 2.into() {
                    bv.sqrt().powi(k.numer().to_i32().unwrap_or(i32::MAX))
                } else if bv < T::zero() && k.denom().bit(0) {
                    // odd root of a negative number
                    -(-bv).powf(rat(k))
                } else {
                    bv.powf(rat(k))
                }
            }
            Node::Func(f, a) => elem(*f, a.eval(env, funcs)?),
            Node::Apply(app) => {
                let args = app.args.iter().map(|a| a.eval(env, funcs)).collect::<Result<Vec<T>, _>>()?;
                funcs.call(&app.name, &app.derivs, &args)?
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(self.to_string()))
        }
    }
}

/// An expression with symbols resolved to slots, for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Compiled {
    op: Op,
    funcs: FunctionTable,
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Var(usize),
    Add(Vec<Op>),
    Mul(Vec<Op>),
    PowI(Box<Op>, i32),
    PowF(Box<Op>, f64, bool),
    Func(ElemFn, Box<Op>),
    Apply(Arc<str>, Vec<u32>, Vec<Op>),
}

fn lower(e: &Expr, slots: &HashMap<&Symbol, usize>) -> Result<Op, EvalError> {
    Ok(match e.node() {
        Node::Num(q) => Op::Const(q.to_f64().unwrap_or(f64::NAN)),
        Node::Sym(s) => Op::Var(*slots.get(s).ok_or_else(|| EvalError::UnboundSymbol(s.name().to_string()))?),
        Node::Add(ts) => Op::Add(ts.iter().map(|t| lower(t, slots)).collect::<Result<_, _>>()?),
        Node::Mul(fs) => Op::Mul(fs.iter().map(|f| lower(f, slots)).collect::<Result<_, _>>()?),
        Node::Pow(b, k) => {
            let b = Box::new(lower(b, slots)?);
            if k.is_integer() {
                Op::PowI(b, k.to_integer().to_i32().unwrap_or(i32::MAX))
            } else {
                Op::PowF(b, k.to_f64().unwrap_or(f64::NAN), k.denom().bit(0))
            }
        }
        Node::Func(f, a) => Op::Func(*f, Box::new(lower(a, slots)?)),
        Node::Apply(app) => Op::Apply(app.name.clone(), app.derivs.clone(), app.args.iter().map(|a| lower(a, slots)).collect::<Result<_, _>>()?),
    })
}

impl Op {
    fn eval<T: Scalar>(&self, vals: &[T], funcs: &FunctionTable) -> Result<T, EvalError> {
        Ok(match self {
            Op::Const(c) => T::from_f64(*c).unwrap(),
            Op::Var(i) => vals[*i],
            Op::Add(ts) => {
                let mut acc = T::zero();
                for t in ts {
                    acc = acc + t.eval(vals, funcs)?;
                }
                acc
            }
            Op::Mul(fs) => {
                let mut acc = T::one();
                for f in fs {
                    acc = acc * f.eval(vals, funcs)?;
                }
                acc
            }
            Op::PowI(b, k) => b.eval(vals, funcs)?.powi(*k),
            Op::PowF(b, k, odd) => {
                let bv = b.eval(vals, funcs)?;
                let k = T::from_f64(*k).unwrap();
                if bv < T::zero() && *odd {
                    -(-bv).powf(k)
                } else {
                    bv.powf(k)
                }
            }
            Op::Func(f, a) => elem(*f, a.eval(vals, funcs)?),
            Op::Apply(name, derivs, args) => {
                let args = args.iter().map(|a| a.eval(vals, funcs)).collect::<Result<Vec<T>, _>>()?;
                funcs.call(name, derivs, &args)?
            }
        })
    }
}

impl Compiled {
    /// Evaluates with `vals[i]` bound to the `i`-th compiled variable.
    pub fn eval<T: Scalar>(&self, vals: &[T]) -> Result<T, EvalError> {
        let v = self.op.eval(vals, &self.funcs)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite("compiled expression".into()))
        }
    }
}

impl Expr {
    /// Resolves every symbol to its position in `vars`. Fails if a symbol or
    /// function has no binding.
    pub fn compile(&self, vars: &[Symbol], funcs: &FunctionTable) -> Result<Compiled, EvalError> {
        let slots: HashMap<&Symbol, usize> = vars.iter().enumerate().map(|(i, s)| (s, i)).collect();
        if let Some(f) = self.function_names().into_iter().find(|f| !funcs.contains(f)) {
            return Err(EvalError::UnknownFunction(f.to_string()));
        }
        Ok(Compiled {
            op: lower(self, &slots)?,
            funcs: funcs.clone(),
        })
    }
}
