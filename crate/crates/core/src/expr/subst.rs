use std::collections::{BTreeMap, BTreeSet};

use super::{Expr, ExprError, Node, Result, Symbol};

/// Simultaneous replacement of symbols by expressions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Substitution {
    rules: BTreeMap<Symbol, Expr>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, s: Symbol, e: Expr) -> Self {
        self.rules.insert(s, e);
        self
    }

    pub fn insert(&mut self, s: Symbol, e: Expr) {
        self.rules.insert(s, e);
    }

    pub fn get(&self, s: &Symbol) -> Option<&Expr> {
        self.rules.get(s)
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, &Expr)> {
        self.rules.iter()
    }

    /// Fails when the rules reference each other in a cycle of length two or
    /// more. A rule mentioning its own symbol (`y -> -y`) is fine.
    pub fn check_acyclic(&self) -> Result<()> {
        let edges: BTreeMap<&Symbol, Vec<Symbol>> = self
            .rules
            .iter()
            .map(|(s, e)| {
                let deps = e.free_symbols().into_iter().filter(|t| t != s && self.rules.contains_key(t)).collect();
                (s, deps)
            })
            .collect();
        // colors: 0 unvisited, 1 on stack, 2 done
        let mut color: BTreeMap<&Symbol, u8> = BTreeMap::new();
        fn visit<'a>(
            s: &'a Symbol,
            edges: &'a BTreeMap<&'a Symbol, Vec<Symbol>>,
            color: &mut BTreeMap<&'a Symbol, u8>,
            path: &mut Vec<&'a Symbol>,
        ) -> Option<Vec<String>> {
            color.insert(s, 1);
            path.push(s);
            for t in &edges[s] {
                let (key, _) = edges.get_key_value(t).expect("edge targets are rule keys");
                match color.get(key).copied().unwrap_or(0) {
                    1 => {
                        let start = path.iter().position(|p| *p == *key).unwrap_or(0);
                        let mut names: Vec<String> = path[start..].iter().map(|p| p.name().to_string()).collect();
                        names.push(key.name().to_string());
                        return Some(names);
                    }
                    0 => {
                        if let Some(c) = visit(key, edges, color, path) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            path.pop();
            color.insert(s, 2);
            None
        }
        for s in edges.keys() {
            if color.get(*s).copied().unwrap_or(0) == 0 {
                let mut path = Vec::new();
                if let Some(cycle) = visit(s, &edges, &mut color, &mut path) {
                    return Err(ExprError::CyclicSubstitution(cycle.join(" -> ")));
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<(Symbol, Expr)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (Symbol, Expr)>>(iter: I) -> Self {
        Substitution {
            rules: iter.into_iter().collect(),
        }
    }
}

impl Expr {
    /// Simultaneous substitution, rejecting cyclic rule sets.
    pub fn substitute(&self, rules: &Substitution) -> Result<Expr> {
        rules.check_acyclic()?;
        self.subs_simultaneous(rules)
    }

    /// Simultaneous substitution without the cycle check; used for point
    /// maps where every symbol is replaced at once.
    pub fn subs_simultaneous(&self, rules: &Substitution) -> Result<Expr> {
        if rules.is_empty() {
            return Ok(self.clone());
        }
        let touched: BTreeSet<&Symbol> = rules.rules.keys().collect();
        self.subs_inner(rules, &touched)
    }

    fn subs_inner(&self, rules: &Substitution, keys: &BTreeSet<&Symbol>) -> Result<Expr> {
        let mut hit = false;
        self.visit_symbols(&mut |s| hit |= keys.contains(s));
        if !hit {
            return Ok(self.clone());
        }
        Ok(match self.node() {
            Node::Num(_) => self.clone(),
            Node::Sym(s) => rules.get(s).cloned().unwrap_or_else(|| self.clone()),
            Node::Add(ts) => Expr::add(ts.iter().map(|t| t.subs_inner(rules, keys)).collect::<Result<Vec<_>>>()?),
            Node::Mul(fs) => Expr::mul(fs.iter().map(|t| t.subs_inner(rules, keys)).collect::<Result<Vec<_>>>()?),
            Node::Pow(b, k) => Expr::pow(&b.subs_inner(rules, keys)?, k.clone())?,
            Node::Func(f, a) => Expr::func(*f, a.subs_inner(rules, keys)?),
            Node::Apply(app) => Expr::apply(
                app.name.clone(),
                app.derivs.clone(),
                app.args.iter().map(|a| a.subs_inner(rules, keys)).collect::<Result<Vec<_>>>()?,
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn substitution_is_simultaneous() {
        let (xs, ys) = (x(), y());
        let (x, y) = (e(&xs), e(&ys));
        let rules = Substitution::new().with(xs.clone(), -&y).with(ys.clone(), -&y);
        // y -> -y is a self-loop; x -> -y references y but y does not reference x
        let r = (&x + &y.scale(&q(2, 1))).substitute(&rules).unwrap();
        assert_eq!(r, (-&y).scale(&q(3, 1)));
    }

    #[test]
    fn cycles_are_rejected() {
        let (xs, ys) = (x(), y());
        let rules = Substitution::new().with(xs.clone(), e(&ys)).with(ys, e(&xs));
        let err = e(&xs).substitute(&rules).unwrap_err();
        assert!(matches!(err, ExprError::CyclicSubstitution(_)));
    }

    #[test]
    fn substituting_a_zero_denominator_fails() {
        let xs = x();
        let f = Expr::powi(&(&e(&xs) - &Expr::one()), -1).unwrap();
        let rules = Substitution::new().with(xs, Expr::one());
        assert_eq!(f.substitute(&rules), Err(ExprError::DivisionByZero));
    }
}
