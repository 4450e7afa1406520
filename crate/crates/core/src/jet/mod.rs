//! Jet-space bookkeeping: coordinates, total derivatives, prolongations.

mod discrete;
mod field;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{Expr, ExprError, MultiIndex, Symbol, SymbolKind};

pub use discrete::DiscreteMap;
pub use field::{ChainOperator, FieldKind, Prolongation, VectorField, MAX_CHARACTERISTIC_ORDER};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum JetError {
    #[error("unsupported discrete map: {0}")]
    UnsupportedMap(String),
    #[error("invalid vector field `{name}`: {reason}")]
    InvalidField { name: String, reason: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Declared variables of a problem. Immutable once built; jet coordinates
/// are value types and are created on demand.
#[derive(Debug, Clone, Default)]
pub struct JetContext {
    independents: Vec<Symbol>,
    dependents: Vec<String>,
    parameters: Vec<Symbol>,
    constants: Vec<Symbol>,
    functions: BTreeMap<String, usize>,
}

impl JetContext {
    pub fn new<S: AsRef<str>>(independents: &[S], dependents: &[S]) -> Self {
        JetContext {
            independents: independents.iter().enumerate().map(|(i, n)| Symbol::independent(n.as_ref(), i)).collect(),
            dependents: dependents.iter().map(|n| n.as_ref().to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn with_parameters<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.parameters.extend(names.iter().map(|n| Symbol::parameter(n.as_ref())));
        self
    }

    pub fn with_constants<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.constants.extend(names.iter().map(|n| Symbol::constant(n.as_ref())));
        self
    }

    pub fn with_function(mut self, name: &str, arity: usize) -> Self {
        self.functions.insert(name.to_string(), arity);
        self
    }

    pub fn add_independent(&mut self, name: &str) -> Symbol {
        let s = Symbol::independent(name, self.independents.len());
        self.independents.push(s.clone());
        s
    }

    pub fn add_dependent(&mut self, name: &str) -> usize {
        self.dependents.push(name.to_string());
        self.dependents.len() - 1
    }

    pub fn add_parameter(&mut self, name: &str) -> Symbol {
        let s = Symbol::parameter(name);
        self.parameters.push(s.clone());
        s
    }

    pub fn add_constant(&mut self, name: &str) -> Symbol {
        let s = Symbol::constant(name);
        self.constants.push(s.clone());
        s
    }

    pub fn add_function(&mut self, name: &str, arity: usize) {
        self.functions.insert(name.to_string(), arity);
    }

    pub fn independents(&self) -> &[Symbol] {
        &self.independents
    }

    pub fn independent(&self, i: usize) -> &Symbol {
        &self.independents[i]
    }

    pub fn dim(&self) -> usize {
        self.independents.len()
    }

    pub fn dependents(&self) -> &[String] {
        &self.dependents
    }

    pub fn parameters(&self) -> &[Symbol] {
        &self.parameters
    }

    pub fn constants(&self) -> &[Symbol] {
        &self.constants
    }

    pub fn functions(&self) -> &BTreeMap<String, usize> {
        &self.functions
    }

    pub fn independent_index(&self, name: &str) -> Option<usize> {
        self.independents.iter().position(|s| s.name() == name)
    }

    pub fn dependent_index(&self, name: &str) -> Option<usize> {
        self.dependents.iter().position(|s| s == name)
    }

    /// The jet coordinate `u_{alpha, J}`, named like `u_xxy`.
    pub fn jet(&self, dep: usize, index: MultiIndex) -> Symbol {
        let mut name = self.dependents[dep].clone();
        if !index.is_zero() {
            name.push('_');
            for i in index.steps() {
                name.push_str(self.independents[i].name());
            }
        }
        Symbol::new(name, SymbolKind::Jet { dep, index })
    }

    pub fn jet_expr(&self, dep: usize, counts: &[u32]) -> Expr {
        Expr::sym(self.jet(dep, MultiIndex::from_counts(counts.to_vec())))
    }

    /// The dependent variable itself as a jet coordinate.
    pub fn dependent(&self, dep: usize) -> Symbol {
        self.jet(dep, MultiIndex::zero(self.dim()))
    }

    pub fn x(&self, i: usize) -> Expr {
        Expr::sym(self.independents[i].clone())
    }

    pub fn u(&self, dep: usize) -> Expr {
        Expr::sym(self.dependent(dep))
    }

    /// Resolves a name: independents, parameters, constants, dependents and
    /// jet coordinates written `u_<vars>`.
    pub fn resolve(&self, name: &str) -> Option<Symbol> {
        if let Some(s) = self.independents.iter().find(|s| s.name() == name) {
            return Some(s.clone());
        }
        if let Some(s) = self.parameters.iter().chain(&self.constants).find(|s| s.name() == name) {
            return Some(s.clone());
        }
        if let Some(d) = self.dependent_index(name) {
            return Some(self.dependent(d));
        }
        let (base, suffix) = name.split_once('_')?;
        let dep = self.dependent_index(base)?;
        let index = self.parse_suffix(suffix)?;
        Some(self.jet(dep, index))
    }

    fn parse_suffix(&self, mut suffix: &str) -> Option<MultiIndex> {
        let mut counts = vec![0u32; self.dim()];
        if suffix.is_empty() {
            return None;
        }
        while !suffix.is_empty() {
            // greedy: longest variable name first
            let (i, len) = self
                .independents
                .iter()
                .enumerate()
                .filter(|(_, s)| suffix.starts_with(s.name()))
                .map(|(i, s)| (i, s.name().len()))
                .max_by_key(|&(_, l)| l)?;
            counts[i] += 1;
            suffix = &suffix[len..];
        }
        Some(MultiIndex::from_counts(counts))
    }

    /// `D_i e = ∂e/∂x_i + Σ u_{α,J+e_i} ∂e/∂u_{α,J}`.
    pub fn total_derivative(&self, e: &Expr, i: usize) -> Expr {
        let mut terms = vec![e.diff(&self.independents[i])];
        for s in e.jet_symbols() {
            let (dep, index) = s.jet_parts().expect("jet symbol");
            let d = e.diff(&s);
            if !d.is_zero() {
                terms.push(&d * &Expr::sym(self.jet(dep, index.raised(i))));
            }
        }
        Expr::add(terms)
    }

    /// `D_J e`, applying the total derivatives in index order.
    pub fn total_derivative_multi(&self, e: &Expr, index: &MultiIndex) -> Expr {
        index.steps().into_iter().fold(e.clone(), |acc, i| self.total_derivative(&acc, i))
    }
}
