use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Expr, ExprError, FunctionTable, Node, Result, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroMode {
    SymbolicOnly,
    SymbolicThenNumeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroVerdict {
    SymbolicallyZero,
    NumericallyZero,
    Nonzero,
    Unknown,
}

impl ZeroVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroVerdict::SymbolicallyZero => "symbolically-zero",
            ZeroVerdict::NumericallyZero => "numerically-zero",
            ZeroVerdict::Nonzero => "nonzero",
            ZeroVerdict::Unknown => "unknown",
        }
    }

    pub fn is_zero(self) -> bool {
        matches!(self, ZeroVerdict::SymbolicallyZero | ZeroVerdict::NumericallyZero)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroStatus {
    pub verdict: ZeroVerdict,
    /// Sample point and value where the expression was visibly nonzero.
    pub witness: Option<(Vec<(String, f64)>, f64)>,
    /// Canonical residual, when not symbolically zero.
    pub residual: Option<Expr>,
    pub max_abs: f64,
}

impl ZeroStatus {
    pub fn symbolic() -> Self {
        ZeroStatus {
            verdict: ZeroVerdict::SymbolicallyZero,
            witness: None,
            residual: None,
            max_abs: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.verdict.is_zero()
    }
}

/// Sampling ranges per symbol. Unlisted symbols use the default punctured
/// interval `[-hi, -lo] ∪ [lo, hi]`.
#[derive(Debug, Clone)]
pub struct SampleBox {
    pub default_lo: f64,
    pub default_hi: f64,
    pub ranges: BTreeMap<Symbol, (f64, f64)>,
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox {
            default_lo: 0.1,
            default_hi: 2.0,
            ranges: BTreeMap::new(),
        }
    }
}

impl SampleBox {
    pub fn sample<R: Rng + ?Sized>(&self, s: &Symbol, rng: &mut R) -> f64 {
        match self.ranges.get(s) {
            Some(&(a, b)) => rng.gen_range(a..=b),
            None => {
                let m = rng.gen_range(self.default_lo..=self.default_hi);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZeroOptions {
    pub mode: ZeroMode,
    pub tol: f64,
    pub samples: usize,
    pub seed: u64,
    pub boxes: SampleBox,
    /// Concrete realizations; missing functions become random cubics.
    pub funcs: FunctionTable,
}

impl Default for ZeroOptions {
    fn default() -> Self {
        ZeroOptions {
            mode: ZeroMode::SymbolicThenNumeric,
            tol: 1e-9,
            samples: 12,
            seed: 0x5eed,
            boxes: SampleBox::default(),
            funcs: FunctionTable::new(),
        }
    }
}

/// Arity of every uninterpreted function applied in `e`.
pub(crate) fn function_arities(e: &Expr, out: &mut BTreeMap<Arc<str>, usize>) {
    if let Node::Apply(app) = e.node() {
        out.insert(app.name.clone(), app.args.len());
    }
    for c in e.children() {
        function_arities(c, out);
    }
}

const MAX_ATTEMPTS_FACTOR: usize = 20;

/// Draws `n` sample points at which every expression evaluates finitely,
/// handing each point and values to `visit`.
pub(crate) fn sample_points(
    exprs: &[Expr],
    opts: &ZeroOptions,
    n: usize,
    mut visit: impl FnMut(&HashMap<Symbol, f64>, &[f64]),
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut arities = BTreeMap::new();
    let mut symbols = std::collections::BTreeSet::new();
    for e in exprs {
        function_arities(e, &mut arities);
        symbols.extend(e.free_symbols());
    }
    let mut funcs = opts.funcs.clone();
    funcs.fill_random(&arities, &mut rng);
    let mut done = 0;
    let mut attempts = 0;
    while done < n {
        attempts += 1;
        if attempts > n * MAX_ATTEMPTS_FACTOR {
            return Err(ExprError::SamplingFailure { attempts: attempts - 1 });
        }
        let env: HashMap<Symbol, f64> = symbols.iter().map(|s| (s.clone(), opts.boxes.sample(s, &mut rng))).collect();
        let vals: std::result::Result<Vec<f64>, _> = exprs.iter().map(|e| e.eval(&env, &funcs)).collect();
        if let Ok(vals) = vals {
            visit(&env, &vals);
            done += 1;
        }
    }
    Ok(())
}

/// Decides whether `e` vanishes: syntactically first, then (in numeric
/// mode) by evaluation at random points.
pub fn is_zero(e: &Expr, opts: &ZeroOptions) -> Result<ZeroStatus> {
    if e.is_zero() {
        return Ok(ZeroStatus::symbolic());
    }
    let mut status = ZeroStatus {
        verdict: ZeroVerdict::Unknown,
        witness: None,
        residual: Some(e.clone()),
        max_abs: f64::NAN,
    };
    if opts.mode == ZeroMode::SymbolicOnly {
        return Ok(status);
    }
    if let Some(q) = e.as_num() {
        let v = num_traits::ToPrimitive::to_f64(q).unwrap_or(f64::INFINITY);
        status.verdict = ZeroVerdict::Nonzero;
        status.witness = Some((vec![], v));
        status.max_abs = v.abs();
        return Ok(status);
    }
    let mut max_abs: f64 = 0.0;
    let mut witness = None;
    let big = opts.tol.sqrt();
    sample_points(std::slice::from_ref(e), opts, opts.samples, |env, vals| {
        let v = vals[0];
        if v.abs() > max_abs {
            max_abs = v.abs();
        }
        if witness.is_none() && v.abs() > big {
            let mut pt: Vec<(String, f64)> = env.iter().map(|(s, x)| (s.name().to_string(), *x)).collect();
            pt.sort_by(|a, b| a.0.cmp(&b.0));
            witness = Some((pt, v));
        }
    })?;
    status.max_abs = max_abs;
    status.verdict = if witness.is_some() {
        ZeroVerdict::Nonzero
    } else if max_abs <= opts.tol {
        ZeroVerdict::NumericallyZero
    } else {
        ZeroVerdict::Unknown
    };
    status.witness = witness;
    Ok(status)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn syntactic_zero() {
        let u = e(&jet("u_x", &[1]));
        let s = is_zero(&(&u - &u), &ZeroOptions::default()).unwrap();
        assert_eq!(s.verdict, ZeroVerdict::SymbolicallyZero);
    }

    #[test]
    fn nonzero_has_witness_that_reevaluates() {
        let (xs, ys) = (x(), y());
        let ux = jet("u_x", &[1, 0]);
        let uy = jet("u_y", &[0, 1]);
        let ex = Expr::add([&e(&xs) * &e(&ux), &(&e(&xs) * &e(&xs)) * &e(&uy), Expr::one()]);
        let s = is_zero(&ex, &ZeroOptions::default()).unwrap();
        assert_eq!(s.verdict, ZeroVerdict::Nonzero);
        let (pt, v) = s.witness.unwrap();
        let env: HashMap<Symbol, f64> = [xs, ys, ux, uy]
            .into_iter()
            .filter_map(|s| pt.iter().find(|(n, _)| n == s.name()).map(|(_, v)| (s, *v)))
            .collect();
        let direct = ex.eval(&env, &FunctionTable::new()).unwrap();
        assert!((direct - v).abs() < 1e-12 && v.abs() > 1e-9f64.sqrt());
    }

    #[test]
    fn hidden_identity_is_numerically_zero() {
        let xs = x();
        let x = e(&xs);
        let t = Expr::func(super::super::ElemFn::Tan, x.clone());
        let s = Expr::func(super::super::ElemFn::Sin, x.clone());
        let c = Expr::func(super::super::ElemFn::Cos, x);
        let ex = &(&t * &c) - &s;
        let st = is_zero(&ex, &ZeroOptions::default()).unwrap();
        assert_eq!(st.verdict, ZeroVerdict::NumericallyZero);
    }

    #[test]
    fn persistent_poles_fail() {
        let xs = x();
        let ex = Expr::func(super::super::ElemFn::Log, -&Expr::powi(&e(&xs), 2).unwrap());
        let err = is_zero(&ex, &ZeroOptions::default()).unwrap_err();
        assert!(matches!(err, ExprError::SamplingFailure { .. }));
    }
}
