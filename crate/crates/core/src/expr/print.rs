use std::fmt::{self, Write};

use num_traits::{One, Signed};

use super::{Expr, Node, Rational};

// precedence levels
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn rational_prec(q: &Rational) -> u8 {
    if q.is_negative() {
        UNARY
    } else if q.is_integer() {
        ATOM
    } else {
        PRODUCT
    }
}

fn fmt_rational(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn prec(e: &Expr) -> u8 {
    match e.node() {
        Node::Num(q) => rational_prec(q),
        Node::Sym(_) | Node::Func(..) | Node::Apply(_) => ATOM,
        Node::Add(_) => SUM,
        Node::Mul(fs) => {
            if fs.first().and_then(Expr::as_num).is_some_and(Signed::is_negative) {
                UNARY
            } else {
                PRODUCT
            }
        }
        Node::Pow(b, k) => {
            if is_half(k) {
                ATOM
            } else if k.is_negative() && !keeps_exponent(b, k) {
                PRODUCT
            } else {
                POWER
            }
        }
    }
}

/// `(a + b)^(-2)` keeps its exponent: `1/(a + b)^2` would parse back with
/// the square expanded.
fn keeps_exponent(b: &Expr, k: &Rational) -> bool {
    k.is_negative() && k.is_integer() && !k.abs().is_one() && matches!(b.node(), Node::Add(_))
}

fn is_half(k: &Rational) -> bool {
    *k.numer() == 1.into() && *k.denom() == 2.into()
}

fn write_wrapped(out: &mut String, e: &Expr, min: u8) {
    if prec(e) < min {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_pow(out: &mut String, b: &Expr, k: &Rational) {
    if is_half(k) {
        out.push_str("sqrt(");
        write_expr(out, b);
        out.push(')');
        return;
    }
    if k.is_negative() && !keeps_exponent(b, k) {
        // 1/b^|k| reads better and parses back identically
        out.push_str("1/");
        let abs = k.abs();
        if abs.is_one() {
            write_wrapped(out, b, ATOM);
        } else {
            write_wrapped(out, b, ATOM);
            out.push('^');
            write_exponent(out, &abs);
        }
        return;
    }
    write_wrapped(out, b, ATOM);
    out.push('^');
    write_exponent(out, k);
}

fn write_exponent(out: &mut String, k: &Rational) {
    if k.is_integer() && !k.is_negative() {
        out.push_str(&k.numer().to_string());
    } else {
        let _ = write!(out, "({})", fmt_rational(k));
    }
}

fn write_product(out: &mut String, fs: &[Expr]) {
    let mut first = true;
    let mut rest = fs;
    if let Some(q) = fs.first().and_then(Expr::as_num) {
        rest = &fs[1..];
        if q.is_negative() {
            out.push('-');
        }
        let a = q.abs();
        if !a.is_one() {
            out.push_str(&fmt_rational(&a));
            first = false;
        }
    }
    for f in rest {
        match f.node() {
            Node::Pow(b, k) if k.is_negative() && !is_half(k) && !keeps_exponent(b, k) => {
                if first {
                    out.push('1');
                }
                out.push('/');
                write_wrapped(out, b, ATOM);
                let abs = k.abs();
                if !abs.is_one() {
                    out.push('^');
                    write_exponent(out, &abs);
                }
            }
            _ => {
                if !first {
                    out.push('*');
                }
                write_wrapped(out, f, POWER);
            }
        }
        first = false;
    }
}

fn write_apply(out: &mut String, app: &super::FuncApp) {
    out.push_str(&app.name);
    let total: u32 = app.derivs.iter().sum();
    if total > 0 {
        if app.args.len() == 1 && total <= 2 {
            for _ in 0..total {
                out.push('\'');
            }
        } else {
            let ds: Vec<String> = app.derivs.iter().map(u32::to_string).collect();
            let _ = write!(out, "'[{}]", ds.join(","));
        }
    }
    out.push('(');
    for (i, a) in app.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
    out.push(')');
}

fn write_expr(out: &mut String, e: &Expr) {
    match e.node() {
        Node::Num(q) => {
            if q.is_negative() {
                out.push('-');
                out.push_str(&fmt_rational(&q.abs()));
            } else {
                out.push_str(&fmt_rational(q));
            }
        }
        Node::Sym(s) => out.push_str(s.name()),
        Node::Add(ts) => {
            for (i, t) in ts.iter().enumerate() {
                if i == 0 {
                    write_wrapped(out, t, PRODUCT.min(prec(t)));
                    continue;
                }
                if t.is_negative_term() {
                    out.push_str(" - ");
                    write_wrapped(out, &-t, PRODUCT);
                } else {
                    out.push_str(" + ");
                    write_wrapped(out, t, PRODUCT);
                }
            }
        }
        Node::Mul(fs) => write_product(out, fs),
        Node::Pow(b, k) => write_pow(out, b, k),
        Node::Func(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(out, a);
            out.push(')');
        }
        Node::Apply(app) => write_apply(out, app),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::ElemFn;
    use super::*;

    #[test]
    fn prints_sums_with_signs() {
        let (x, y) = (e(&x()), e(&y()));
        let s = &(&x * &x).scale(&q(3, 2)) - &y;
        assert_eq!(s.to_string(), "3/2*x^2 - y");
    }

    #[test]
    fn prints_roots_and_denominators() {
        let x = e(&x());
        let r = Expr::sqrt(&(&x + &Expr::one())).unwrap();
        assert_eq!(r.to_string(), "sqrt(1 + x)");
        let d = Expr::powi(&x, -2).unwrap();
        assert_eq!(d.to_string(), "1/x^2");
        let f = Expr::func(ElemFn::Sech, x);
        assert_eq!(f.to_string(), "sech(x)");
    }

    #[test]
    fn prints_function_derivatives() {
        let u = e(&jet("u", &[0]));
        let g = Expr::apply("g", vec![2], vec![u.clone()]);
        assert_eq!(g.to_string(), "g''(u)");
        let r = Expr::apply("R", vec![1, 0], vec![u.clone(), u]);
        assert_eq!(r.to_string(), "R'[1,0](u, u)");
    }
}
