use std::collections::BTreeMap;

use num_traits::{One, Zero};

use super::canon::{from_poly, to_poly, Mono, Poly};
use super::{Expr, Node, Rational};

fn atom_power(a: &Expr, k: &Rational) -> Expr {
    if k.is_one() {
        a.clone()
    } else {
        Expr::pow(a, k.clone()).expect("atoms of a canonical monomial are nonzero")
    }
}

fn is_parametric_atom(a: &Expr) -> bool {
    match a.node() {
        Node::Sym(s) => s.is_parametric(),
        _ => false,
    }
}

/// Peels the explicit product structure of `e`: the monomial content shared
/// by every term, a common polynomial coefficient in the parameters, and the
/// remaining cofactor. The numeric content is dropped.
pub fn factor_split(e: &Expr) -> Vec<Expr> {
    let p = to_poly(e);
    if p.0.len() <= 1 {
        return match p.0.into_iter().next() {
            None => vec![Expr::zero()],
            Some((m, _)) => m.0.iter().map(|(a, k)| atom_power(a, k)).collect(),
        };
    }

    // monomial content: atoms present in every term, at their minimum power
    let mut content: Option<BTreeMap<Expr, Rational>> = None;
    for m in p.0.keys() {
        let here: BTreeMap<Expr, Rational> = m.0.iter().cloned().collect();
        content = Some(match content {
            None => here,
            Some(c) => c
                .into_iter()
                .filter_map(|(a, k)| here.get(&a).map(|k2| (a, if *k2 < k { k2.clone() } else { k })))
                .collect(),
        });
    }
    let content: Vec<(Expr, Rational)> = content
        .unwrap_or_default()
        .into_iter()
        .filter(|(a, k)| !k.is_zero() && !(matches!(a.node(), Node::Add(_)) && !k.is_integer()))
        .collect();
    let mut rest = Poly::default();
    for (m, c) in &p.0 {
        let mut atoms: BTreeMap<Expr, Rational> = m.0.iter().cloned().collect();
        for (a, k) in &content {
            let v = atoms.get_mut(a).expect("content atom occurs in every term");
            *v -= k;
            if v.is_zero() {
                atoms.remove(a);
            }
        }
        rest.add_term(Mono(atoms.into_iter().collect()), c.clone());
    }

    let mut factors: Vec<Expr> = content.iter().map(|(a, k)| atom_power(a, k)).collect();

    // common parameter polynomial
    let mut groups: BTreeMap<Mono, Poly> = BTreeMap::new();
    for (m, c) in &rest.0 {
        let (par, other): (Vec<_>, Vec<_>) = m.0.iter().cloned().partition(|(a, _)| is_parametric_atom(a));
        groups.entry(Mono(other)).or_default().add_term(Mono(par), c.clone());
    }
    let mut param_factor = None;
    if let Some(first) = groups.values().next() {
        if first.0.len() > 1 || first.0.keys().next().is_some_and(|m| !m.0.is_empty()) {
            let (m0, c0) = first.0.iter().next().unwrap();
            let mut ratios = Vec::new();
            let proportional = groups.values().all(|g| {
                let Some(c) = g.0.get(m0) else { return false };
                let r = c / c0;
                let ok = g.0.len() == first.0.len() && g.0.iter().all(|(m, v)| first.0.get(m).is_some_and(|w| *v == w * &r));
                ratios.push(r);
                ok
            });
            if proportional {
                param_factor = Some((from_poly(first), ratios));
            }
        }
    }
    let cofactor = match param_factor {
        Some((pf, ratios)) => {
            let mut co = Poly::default();
            for ((other, _), r) in groups.iter().zip(ratios) {
                co.add_term(other.clone(), r);
            }
            factors.push(monic(&to_poly(&pf)));
            co
        }
        None => rest,
    };
    let co = monic(&cofactor);
    if !co.is_one() {
        factors.push(co);
    }
    factors
}

fn monic(p: &Poly) -> Expr {
    let e = from_poly(p);
    let (c, _) = e.coefficient_split();
    if c.is_zero() {
        return e;
    }
    e.scale(&c.recip())
}
