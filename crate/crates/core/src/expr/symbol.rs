use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

/// Derivative counts per independent variable, indexed by declaration order.
///
/// The all-zero index denotes the base dependent variable itself. Because the
/// representation stores counts rather than a sequence of variables, mixed
/// derivatives are canonical by construction (`u_xy` and `u_yx` coincide).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        MultiIndex(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `self + e_i`.
    pub fn raised(&self, i: usize) -> Self {
        let mut counts = self.0.clone();
        counts[i] += 1;
        MultiIndex(counts)
    }

    /// `self - e_i`, if that stays non-negative.
    pub fn lowered(&self, i: usize) -> Option<Self> {
        if self.0[i] == 0 {
            return None;
        }
        let mut counts = self.0.clone();
        counts[i] -= 1;
        Some(MultiIndex(counts))
    }

    /// True when `self` is a derivative of `other` (componentwise `>=`).
    pub fn dominates(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    /// `self - other`, when `self` dominates `other`.
    pub fn difference(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !self.dominates(other) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn sum(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Expands the index into a sequence of variable positions, lowest first.
    pub fn steps(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
            .collect()
    }
}

/// Graded order: total order first, then the counts compared lexicographically.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    /// Symbolic parameter carried through computations (`a`, `b`, `c`).
    Parameter,
    /// Constant of a solution family (`c1`, `c2`, `t0`).
    Constant,
    /// The group parameter `lambda` of an orbit.
    GroupParameter,
    /// Independent variable, with its declaration position.
    Independent(usize),
    /// Jet coordinate `u_{alpha,J}`; the zero index is the dependent variable.
    Jet { dep: usize, index: MultiIndex },
}

impl SymbolKind {
    fn rank(&self) -> u8 {
        match self {
            SymbolKind::Parameter | SymbolKind::Constant | SymbolKind::GroupParameter => 0,
            SymbolKind::Independent(_) => 1,
            SymbolKind::Jet { .. } => 2,
        }
    }
}

#[derive(Debug, PartialEq, Eq, Hash)]
struct SymbolData {
    name: String,
    kind: SymbolKind,
}

/// A named atom of an expression. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Symbol(Arc<SymbolData>);

impl Symbol {
    pub fn new(name: impl Into<String>, kind: SymbolKind) -> Self {
        Symbol(Arc::new(SymbolData {
            name: name.into(),
            kind,
        }))
    }

    pub fn parameter(name: impl Into<String>) -> Self {
        Symbol::new(name, SymbolKind::Parameter)
    }

    pub fn constant(name: impl Into<String>) -> Self {
        Symbol::new(name, SymbolKind::Constant)
    }

    pub fn independent(name: impl Into<String>, position: usize) -> Self {
        Symbol::new(name, SymbolKind::Independent(position))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.0.kind
    }

    pub fn is_jet(&self) -> bool {
        matches!(self.0.kind, SymbolKind::Jet { .. })
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.0.kind, SymbolKind::Independent(_))
    }

    /// Parameters, ansatz constants and the group parameter.
    pub fn is_parametric(&self) -> bool {
        self.0.kind.rank() == 0
    }

    pub fn jet_parts(&self) -> Option<(usize, &MultiIndex)> {
        match &self.0.kind {
            SymbolKind::Jet { dep, index } => Some((*dep, index)),
            _ => None,
        }
    }

    pub fn independent_position(&self) -> Option<usize> {
        match self.0.kind {
            SymbolKind::Independent(i) => Some(i),
            _ => None,
        }
    }

    /// Jet order; zero for anything that is not a jet coordinate.
    pub fn jet_order(&self) -> u32 {
        self.jet_parts().map_or(0, |(_, j)| j.order())
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let (a, b) = (&self.0.kind, &other.0.kind);
        a.rank()
            .cmp(&b.rank())
            .then_with(|| match (a, b) {
                (SymbolKind::Independent(i), SymbolKind::Independent(j)) => i.cmp(j),
                (
                    SymbolKind::Jet { dep: da, index: ia },
                    SymbolKind::Jet { dep: db, index: ib },
                ) => da.cmp(db).then_with(|| ia.cmp(ib)),
                _ => Ordering::Equal,
            })
            .then_with(|| self.0.name.cmp(&other.0.name))
            .then_with(|| kind_tag(a).cmp(&kind_tag(b)))
    }
}

fn kind_tag(k: &SymbolKind) -> u8 {
    match k {
        SymbolKind::Parameter => 0,
        SymbolKind::Constant => 1,
        SymbolKind::GroupParameter => 2,
        SymbolKind::Independent(_) => 3,
        SymbolKind::Jet { .. } => 4,
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_is_graded() {
        let a = MultiIndex::from_counts(vec![0, 3]);
        let b = MultiIndex::from_counts(vec![2, 0]);
        assert!(b < a);
        assert_eq!(a.order(), 3);
        assert_eq!(a.steps(), vec![1, 1, 1]);
    }

    #[test]
    fn dominance_and_difference() {
        let a = MultiIndex::from_counts(vec![2, 1]);
        let b = MultiIndex::from_counts(vec![1, 0]);
        assert!(a.dominates(&b));
        assert!(!b.dominates(&a));
        assert_eq!(a.difference(&b), Some(MultiIndex::from_counts(vec![1, 1])));
    }

    #[test]
    fn symbols_order_by_role() {
        let p = Symbol::parameter("z");
        let x = Symbol::independent("a", 0);
        let u = Symbol::new(
            "u",
            SymbolKind::Jet {
                dep: 0,
                index: MultiIndex::zero(1),
            },
        );
        assert!(p < x && x < u);
    }
}
