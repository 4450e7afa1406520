use num_traits::One;

use super::{ElemFn, Expr, FuncApp, Node, Rational, Symbol};

impl Expr {
    /// Partial derivative with respect to a symbol, all other symbols held
    /// fixed. Uninterpreted functions pick up derivative indices.
    pub fn diff(&self, s: &Symbol) -> Expr {
        if !self.contains_symbol(s) {
            return Expr::zero();
        }
        match self.node() {
            Node::Num(_) => Expr::zero(),
            Node::Sym(t) => {
                if t == s {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(ts) => Expr::add(ts.iter().map(|t| t.diff(s))),
            Node::Mul(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for (i, f) in fs.iter().enumerate() {
                    let d = f.diff(s);
                    if d.is_zero() {
                        continue;
                    }
                    let mut parts: Vec<Expr> = fs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, g)| g.clone()).collect();
                    parts.push(d);
                    terms.push(Expr::mul(parts));
                }
                Expr::add(terms)
            }
            Node::Pow(b, k) => {
                let db = b.diff(s);
                let lower = Expr::pow(b, k - Rational::one()).expect("base is nonzero in a canonical power");
                Expr::mul([Expr::num(k.clone()), lower, db])
            }
            Node::Func(f, a) => {
                let da = a.diff(s);
                if da.is_zero() {
                    return Expr::zero();
                }
                &elem_derivative(*f, a) * &da
            }
            Node::Apply(app) => {
                let mut terms = Vec::new();
                for (i, a) in app.args.iter().enumerate() {
                    let da = a.diff(s);
                    if da.is_zero() {
                        continue;
                    }
                    let mut derivs = app.derivs.clone();
                    derivs[i] += 1;
                    let f = Expr::from_node(Node::Apply(FuncApp {
                        name: app.name.clone(),
                        derivs,
                        args: app.args.clone(),
                    }));
                    terms.push(&f * &da);
                }
                Expr::add(terms)
            }
        }
    }
}

/// `f'(a)` for an elementary function.
pub(crate) fn elem_derivative(f: ElemFn, a: &Expr) -> Expr {
    let same = |g: ElemFn| Expr::func(g, a.clone());
    match f {
        ElemFn::Exp => same(ElemFn::Exp),
        ElemFn::Log => a.recip().expect("log argument is nonzero"),
        ElemFn::Sin => same(ElemFn::Cos),
        ElemFn::Cos => -same(ElemFn::Sin),
        ElemFn::Tan => {
            let t = same(ElemFn::Tan);
            &Expr::one() + &(&t * &t)
        }
        ElemFn::Sinh => same(ElemFn::Cosh),
        ElemFn::Cosh => same(ElemFn::Sinh),
        ElemFn::Tanh => {
            let t = same(ElemFn::Tanh);
            &Expr::one() - &(&t * &t)
        }
        ElemFn::Sech => -(&same(ElemFn::Sech) * &same(ElemFn::Tanh)),
    }
}
