//! Canonicalization: expressions are flattened into a polynomial over atoms,
//! simplified monomial by monomial, then rebuilt.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{ElemFn, Expr, ExprError, Node, Rational, Result};

/// Product of atoms raised to nonzero rational powers, sorted by atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub(crate) struct Mono(pub Vec<(Expr, Rational)>);

/// Sum of monomials with nonzero rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub(crate) struct Poly(pub BTreeMap<Mono, Rational>);

impl Mono {
    fn degree(&self) -> Rational {
        self.0.iter().fold(Rational::zero(), |acc, (_, k)| acc + k)
    }

    fn all_nonneg_int(&self) -> bool {
        self.0.iter().all(|(_, k)| k.is_integer() && !k.is_negative())
    }
}

impl Poly {
    pub fn constant(q: Rational) -> Poly {
        let mut p = Poly::default();
        if !q.is_zero() {
            p.0.insert(Mono::default(), q);
        }
        p
    }

    pub fn add_term(&mut self, m: Mono, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.0.get_mut(&m) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.0.remove(&m);
                }
            }
            None => {
                self.0.insert(m, c);
            }
        }
    }

    pub fn add_poly(&mut self, other: &Poly) {
        for (m, c) in &other.0 {
            self.add_term(m.clone(), c.clone());
        }
    }

    fn scaled(&self, q: &Rational) -> Poly {
        if q.is_zero() {
            return Poly::default();
        }
        Poly(self.0.iter().map(|(m, c)| (m.clone(), c * q)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }
}

// ---- conversion ---------------------------------------------------------

/// Reads a canonical expression as a polynomial over its atoms.
pub(crate) fn to_poly(e: &Expr) -> Poly {
    match e.node() {
        Node::Num(q) => Poly::constant(q.clone()),
        Node::Add(ts) => {
            let mut p = Poly::default();
            for t in ts {
                let (m, c) = term_parts(t);
                p.add_term(m, c);
            }
            p
        }
        _ => {
            let (m, c) = term_parts(e);
            let mut p = Poly::default();
            p.add_term(m, c);
            p
        }
    }
}

fn term_parts(t: &Expr) -> (Mono, Rational) {
    match t.node() {
        Node::Num(q) => (Mono::default(), q.clone()),
        Node::Mul(fs) => {
            let mut c = Rational::one();
            let mut atoms = Vec::with_capacity(fs.len());
            for f in fs {
                match f.node() {
                    Node::Num(q) => c *= q,
                    Node::Pow(b, k) => atoms.push((b.clone(), k.clone())),
                    _ => atoms.push((f.clone(), Rational::one())),
                }
            }
            atoms.sort_by(|a, b| a.0.cmp(&b.0));
            (Mono(atoms), c)
        }
        Node::Pow(b, k) => (Mono(vec![(b.clone(), k.clone())]), Rational::one()),
        _ => (Mono(vec![(t.clone(), Rational::one())]), Rational::one()),
    }
}

fn build_term(m: &Mono, c: &Rational) -> Expr {
    let mut factors: Vec<Expr> = m
        .0
        .iter()
        .map(|(a, k)| {
            if k.is_one() {
                a.clone()
            } else {
                Expr::from_node(Node::Pow(a.clone(), k.clone()))
            }
        })
        .collect();
    if factors.is_empty() {
        return Expr::num(c.clone());
    }
    if c.is_one() {
        if factors.len() == 1 {
            return factors.pop().unwrap();
        }
        return Expr::from_node(Node::Mul(factors));
    }
    factors.insert(0, Expr::num(c.clone()));
    Expr::from_node(Node::Mul(factors))
}

pub(crate) fn from_poly(p: &Poly) -> Expr {
    let mut terms: Vec<Expr> = p.0.iter().map(|(m, c)| build_term(m, c)).collect();
    match terms.len() {
        0 => Expr::zero(),
        1 => terms.pop().unwrap(),
        _ => Expr::from_node(Node::Add(terms)),
    }
}

// ---- monomial simplification -------------------------------------------

fn rat_int(k: &Rational) -> Option<i32> {
    if k.is_integer() {
        k.to_integer().to_i32()
    } else {
        None
    }
}

fn rpow(q: &Rational, k: i32) -> Rational {
    if k >= 0 {
        num_traits::pow(q.clone(), k as usize)
    } else {
        num_traits::pow(q.recip(), (-k) as usize)
    }
}

fn exact_root(n: &BigInt, q: u32) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.nth_root(q);
    (num_traits::pow(r.clone(), q as usize) == *n).then_some(r)
}

/// `n^(p/q)` as an exact rational, if it is one.
fn rational_root(n: &Rational, p: i32, q: u32) -> Option<Rational> {
    let base = rpow(n, p);
    let num = exact_root(base.numer(), q)?;
    let den = exact_root(base.denom(), q)?;
    Some(Rational::new(num, den))
}

fn poly_pow_int(p: &Poly, k: u32) -> Poly {
    let mut acc = Poly::constant(Rational::one());
    for _ in 0..k {
        acc = poly_mul(&acc, p);
    }
    acc
}

/// Simplifies `coeff * prod(atoms)` into a polynomial.
fn simplify_mono(atoms: Vec<(Expr, Rational)>, coeff: Rational) -> Poly {
    if coeff.is_zero() {
        return Poly::default();
    }
    // merge duplicate atoms
    let mut merged: BTreeMap<Expr, Rational> = BTreeMap::new();
    for (a, k) in atoms {
        *merged.entry(a).or_insert_with(Rational::zero) += k;
    }
    let mut coeff = coeff;
    let mut kept: Vec<(Expr, Rational)> = Vec::new();
    let mut expansions: Vec<Poly> = Vec::new();
    let mut exp_arg: Option<Expr> = None;

    for (a, k) in merged {
        if k.is_zero() {
            continue;
        }
        match a.node() {
            Node::Num(n) => {
                if n.is_zero() {
                    return Poly::default();
                }
                let whole = k.floor();
                let frac = &k - &whole;
                let w = rat_int(&whole);
                match w {
                    Some(w) => coeff *= rpow(n, w),
                    None => {
                        kept.push((a.clone(), k));
                        continue;
                    }
                }
                if frac.is_zero() {
                    continue;
                }
                let p = frac.numer().to_i32().unwrap_or(1);
                let q = frac.denom().to_u32().unwrap_or(1);
                let mut base = n.clone();
                if base.is_negative() && q % 2 == 1 {
                    if p % 2 == 1 {
                        coeff = -coeff;
                    }
                    base = -base;
                }
                if base.is_negative() {
                    kept.push((Expr::num(base), frac));
                } else if let Some(r) = rational_root(&base, p, q) {
                    coeff *= r;
                } else {
                    kept.push((Expr::num(base), frac));
                }
            }
            Node::Func(ElemFn::Exp, arg) => {
                let t = arg.scale(&k);
                exp_arg = Some(match exp_arg {
                    None => t,
                    Some(s) => add2(&s, &t),
                });
            }
            Node::Func(ElemFn::Sech, _) if k.is_integer() && k >= Rational::from_integer(2.into()) => {
                let kk = k.to_integer().to_u32().unwrap_or(2);
                let tanh = match a.node() {
                    Node::Func(_, arg) => Expr::from_node(Node::Func(ElemFn::Tanh, arg.clone())),
                    _ => unreachable!(),
                };
                let mut one_minus = Poly::constant(Rational::one());
                one_minus.add_term(Mono(vec![(tanh, Rational::from_integer(2.into()))]), -Rational::one());
                expansions.push(poly_pow_int(&one_minus, kk / 2));
                if kk % 2 == 1 {
                    kept.push((a.clone(), Rational::one()));
                }
            }
            Node::Add(_) if k.is_integer() && k.is_positive() => {
                let kk = k.to_integer().to_u32().unwrap_or(1);
                expansions.push(poly_pow_int(&to_poly(&a), kk));
            }
            Node::Mul(_) if k.is_integer() => {
                // monomial base kept only while its exponent was fractional
                let (m, c) = term_parts(&a);
                let kk = rat_int(&k).unwrap_or(1);
                let atoms = m.0.into_iter().map(|(b, e)| (b, e * &k)).collect();
                expansions.push(simplify_mono(atoms, rpow(&c, kk)));
            }
            _ => kept.push((a.clone(), k)),
        }
    }

    if let Some(s) = exp_arg {
        if let Some(q) = s.as_num() {
            if q.is_zero() {
                // exp(0) = 1
            } else {
                kept.push((Expr::from_node(Node::Func(ElemFn::Exp, s)), Rational::one()));
            }
        } else {
            kept.push((Expr::from_node(Node::Func(ElemFn::Exp, s)), Rational::one()));
        }
    }
    kept.sort_by(|a, b| a.0.cmp(&b.0));
    let mut p = Poly::default();
    p.add_term(Mono(kept), coeff);
    for e in expansions {
        p = poly_mul(&p, &e);
    }
    p
}

pub(crate) fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::default();
    for (m1, c1) in &a.0 {
        for (m2, c2) in &b.0 {
            let atoms: Vec<(Expr, Rational)> = m1.0.iter().chain(m2.0.iter()).cloned().collect();
            let coeff = c1 * c2;
            if needs_simplify(&atoms) {
                out.add_poly(&simplify_mono(atoms, coeff));
            } else {
                let mut atoms = atoms;
                atoms.sort_by(|x, y| x.0.cmp(&y.0));
                out.add_term(Mono(atoms), coeff);
            }
        }
    }
    out
}

/// Fast path: a concatenation of two canonical monomials needs work only if
/// atoms repeat or two exponentials meet.
fn needs_simplify(atoms: &[(Expr, Rational)]) -> bool {
    let mut seen_exp = false;
    for (i, (a, _)) in atoms.iter().enumerate() {
        if matches!(a.node(), Node::Func(ElemFn::Exp, _)) {
            if seen_exp {
                return true;
            }
            seen_exp = true;
        }
        if atoms[..i].iter().any(|(b, _)| b == a) {
            return true;
        }
        if matches!(a.node(), Node::Num(_)) && atoms[..i].iter().any(|(b, _)| matches!(b.node(), Node::Num(_))) {
            // distinct numeric roots are left alone
        }
    }
    false
}

// ---- denominators ---------------------------------------------------------

fn grlex(a: &Mono, b: &Mono) -> Ordering {
    a.degree().cmp(&b.degree()).then_with(|| {
        let (mut i, mut j) = (0, 0);
        let zero = Rational::zero();
        loop {
            let (x, y) = (a.0.get(i), b.0.get(j));
            let (ka, kb) = match (x, y) {
                (None, None) => return Ordering::Equal,
                (Some((_, k)), None) => {
                    i += 1;
                    (k, &zero)
                }
                (None, Some((_, k))) => {
                    j += 1;
                    (&zero, k)
                }
                (Some((ax, kx)), Some((by, ky))) => match ax.cmp(by) {
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                        (kx, ky)
                    }
                    Ordering::Less => {
                        i += 1;
                        (kx, &zero)
                    }
                    Ordering::Greater => {
                        j += 1;
                        (&zero, ky)
                    }
                },
            };
            match ka.cmp(kb) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
    })
}

fn leading(p: &Poly) -> Option<(&Mono, &Rational)> {
    p.0.iter().max_by(|a, b| grlex(a.0, b.0))
}

fn mono_div(a: &Mono, b: &Mono) -> Option<Mono> {
    let mut out: BTreeMap<Expr, Rational> = a.0.iter().cloned().collect();
    for (x, k) in &b.0 {
        let e = out.entry(x.clone()).or_insert_with(Rational::zero);
        *e -= k;
        if e.is_negative() {
            return None;
        }
    }
    Some(Mono(out.into_iter().filter(|(_, k)| !k.is_zero()).collect()))
}

/// Exact multivariate division; `None` when `d` does not divide `n`.
fn div_exact(n: &Poly, d: &Poly) -> Option<Poly> {
    if !n.0.keys().all(Mono::all_nonneg_int) || !d.0.keys().all(Mono::all_nonneg_int) {
        return None;
    }
    let (ld, lc) = leading(d)?;
    let (ld, lc) = (ld.clone(), lc.clone());
    let mut r = n.clone();
    let mut quot = Poly::default();
    for _ in 0..2000 {
        let Some((lr, rc)) = leading(&r) else {
            return Some(quot);
        };
        let t = mono_div(lr, &ld)?;
        let c = rc / &lc;
        let mut tp = Poly::default();
        tp.add_term(t, c);
        quot.add_poly(&tp);
        r.add_poly(&poly_mul(&tp, d).scaled(&-Rational::one()));
    }
    None
}

fn is_denominator(a: &Expr, k: &Rational) -> bool {
    matches!(a.node(), Node::Add(_)) && k.is_integer() && k.is_negative()
}

/// Cancels sum-valued denominators against numerators that they divide.
fn finalize(p: Poly) -> Poly {
    let mut p = p;
    for _ in 0..6 {
        let mut groups: BTreeMap<Vec<(Expr, Rational)>, Poly> = BTreeMap::new();
        for (m, c) in &p.0 {
            let (den, rest): (Vec<_>, Vec<_>) = m.0.iter().cloned().partition(|(a, k)| is_denominator(a, k));
            groups.entry(den).or_default().add_term(Mono(rest), c.clone());
        }
        if groups.keys().all(Vec::is_empty) {
            return p;
        }
        let mut changed = false;
        let mut rebuilt = Poly::default();
        for (den, mut num) in groups {
            let mut den = den;
            if !den.is_empty() {
                for (d, k) in den.iter_mut() {
                    let dp = to_poly(d);
                    while k.is_negative() {
                        match div_exact(&num, &dp) {
                            Some(q) => {
                                num = q;
                                *k += Rational::one();
                                changed = true;
                            }
                            None => break,
                        }
                    }
                }
            }
            let den: Vec<_> = den.into_iter().filter(|(_, k)| !k.is_zero()).collect();
            let dp = simplify_mono(den, Rational::one());
            rebuilt.add_poly(&poly_mul(&num, &dp));
        }
        if !changed {
            return p;
        }
        p = rebuilt;
    }
    p
}

// ---- public entry points ------------------------------------------------

pub(crate) fn add2(a: &Expr, b: &Expr) -> Expr {
    if a.is_zero() {
        return b.clone();
    }
    if b.is_zero() {
        return a.clone();
    }
    let mut p = to_poly(a);
    p.add_poly(&to_poly(b));
    from_poly(&finalize(p))
}

pub(crate) fn add_all<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
    let mut p = Poly::default();
    for t in terms {
        p.add_poly(&to_poly(&t));
    }
    from_poly(&finalize(p))
}

pub(crate) fn mul2(a: &Expr, b: &Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        return Expr::zero();
    }
    if a.is_one() {
        return b.clone();
    }
    if b.is_one() {
        return a.clone();
    }
    from_poly(&finalize(poly_mul(&to_poly(a), &to_poly(b))))
}

pub(crate) fn mul_all<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
    let mut acc = Poly::constant(Rational::one());
    for f in factors {
        acc = poly_mul(&acc, &to_poly(&f));
        if acc.is_zero() {
            return Expr::zero();
        }
    }
    from_poly(&finalize(acc))
}

pub(crate) fn scale(a: &Expr, q: &Rational) -> Expr {
    if q.is_one() {
        return a.clone();
    }
    from_poly(&to_poly(a).scaled(q))
}

pub(crate) fn pow(base: &Expr, k: &Rational) -> Result<Expr> {
    if k.is_zero() {
        return Ok(Expr::one());
    }
    if k.is_one() {
        return Ok(base.clone());
    }
    let p = to_poly(base);
    if p.is_zero() {
        return if k.is_positive() {
            Ok(Expr::zero())
        } else {
            Err(ExprError::DivisionByZero)
        };
    }
    if p.0.len() == 1 {
        let (m, c) = p.0.iter().next().unwrap();
        let mut atoms: Vec<(Expr, Rational)> = m.0.iter().map(|(a, e)| (a.clone(), e * k)).collect();
        let mut coeff = Rational::one();
        if !c.is_one() {
            if k.is_integer() {
                coeff = rpow(c, rat_int(k).unwrap_or(1));
            } else {
                atoms.push((Expr::num(c.clone()), k.clone()));
            }
        }
        return Ok(from_poly(&finalize(simplify_mono(atoms, coeff))));
    }
    if k.is_integer() && k.is_positive() {
        let kk = k.to_integer().to_u32().unwrap_or(1);
        return Ok(from_poly(&finalize(poly_pow_int(&p, kk))));
    }
    // irreducible sum base: normalize its leading coefficient
    let (_, lc) = p.0.iter().next().unwrap();
    let lead = if k.is_integer() { lc.clone() } else { lc.abs() };
    let monic = from_poly(&p.scaled(&lead.recip()));
    let atoms = vec![(monic, k.clone()), (Expr::num(lead), k.clone())];
    Ok(from_poly(&finalize(simplify_mono(atoms, Rational::one()))))
}

pub(crate) fn func(f: ElemFn, arg: Expr) -> Expr {
    if let Some(q) = arg.as_num() {
        if q.is_zero() {
            match f {
                ElemFn::Exp | ElemFn::Cos | ElemFn::Cosh | ElemFn::Sech => return Expr::one(),
                ElemFn::Sin | ElemFn::Tan | ElemFn::Sinh | ElemFn::Tanh => return Expr::zero(),
                ElemFn::Log => {}
            }
        }
        if q.is_one() && f == ElemFn::Log {
            return Expr::zero();
        }
    }
    if f == ElemFn::Log {
        if let Node::Func(ElemFn::Exp, inner) = arg.node() {
            return inner.clone();
        }
    }
    Expr::from_node(Node::Func(f, arg))
}

pub(crate) fn coefficient_split(e: &Expr) -> (Rational, Expr) {
    let p = to_poly(e);
    match p.0.iter().next() {
        None => (Rational::zero(), Expr::zero()),
        Some((_, c)) => {
            let c = c.clone();
            (c.clone(), from_poly(&p.scaled(&c.recip())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn like_terms_collect() {
        let x = e(&x());
        let s = &(&x + &x) - &x.scale(&q(2, 1));
        assert!(s.is_zero());
    }

    #[test]
    fn products_expand() {
        let (x, y) = (e(&x()), e(&y()));
        let lhs = Expr::powi(&(&x + &y), 2).unwrap();
        let rhs = Expr::add([&x * &x, (&x * &y).scale(&q(2, 1)), &y * &y]);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn exponentials_merge() {
        let x = e(&x());
        let a = Expr::func(ElemFn::Exp, x.clone());
        let b = Expr::func(ElemFn::Exp, -&x);
        assert!((&a * &b).is_one());
    }

    #[test]
    fn sech_squared_rewrites() {
        let x = e(&x());
        let s = Expr::func(ElemFn::Sech, x.clone());
        let t = Expr::func(ElemFn::Tanh, x);
        let lhs = &s * &s;
        assert_eq!(lhs, &Expr::one() - &(&t * &t));
    }

    #[test]
    fn numeric_roots() {
        let four = Expr::int(4);
        assert_eq!(Expr::sqrt(&four).unwrap(), Expr::int(2));
        let three = Expr::int(3);
        let r = Expr::sqrt(&three).unwrap();
        assert_eq!(&r * &r, three);
    }

    #[test]
    fn denominators_cancel() {
        let (x, y) = (e(&x()), e(&y()));
        let num = &(&x * &x) - &(&y * &y);
        let den = &x + &y;
        let r = num.checked_div(&den).unwrap();
        assert_eq!(r, &x - &y);
    }

    #[test]
    fn zero_division_is_an_error() {
        assert_eq!(Expr::zero().recip(), Err(ExprError::DivisionByZero));
        let x = e(&x());
        assert!((&x - &x).recip().is_err());
    }

    #[test]
    fn normalize_is_idempotent_on_raw_trees() {
        let (x, y) = (e(&x()), e(&y()));
        let raw = Expr::raw_mul(vec![Expr::raw_add(vec![x.clone(), y.clone()]), Expr::raw_add(vec![x.clone(), -&y])]);
        let n = raw.normalize().unwrap();
        assert_eq!(n, &(&x * &x) - &(&y * &y));
        assert_eq!(n.normalize().unwrap(), n);
    }
}
