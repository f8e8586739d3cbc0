//! Symbolic feature maps.
//!
//! Features are small expression trees over state and input coordinates.
//! The grammar only admits constants, coordinates, sums, products and `sin`,
//! so every feature map built from it is real-analytic.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    State(usize),
    Input(usize),
    Sin(Box<Expr>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
}

/// Node kinds appearing in an [`Expr`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermKind {
    Const,
    State,
    Input,
    Sin,
    Sum,
    Product,
}

impl Expr {
    pub fn sin(e: Expr) -> Expr {
        Expr::Sin(Box::new(e))
    }

    pub fn product(terms: impl IntoIterator<Item = Expr>) -> Expr {
        Expr::Product(terms.into_iter().collect())
    }

    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        Expr::Sum(terms.into_iter().collect())
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::State(i) => x[*i],
            Expr::Input(j) => u[*j],
            Expr::Sin(e) => e.eval(x, u).sin(),
            Expr::Sum(es) => es.iter().map(|e| e.eval(x, u)).sum(),
            Expr::Product(es) => es.iter().map(|e| e.eval(x, u)).product(),
        }
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Sin(e) => e.visit(f),
            Expr::Sum(es) | Expr::Product(es) => es.iter().for_each(|e| e.visit(f)),
            _ => {}
        }
    }

    pub fn kind(&self) -> TermKind {
        match self {
            Expr::Const(_) => TermKind::Const,
            Expr::State(_) => TermKind::State,
            Expr::Input(_) => TermKind::Input,
            Expr::Sin(_) => TermKind::Sin,
            Expr::Sum(_) => TermKind::Sum,
            Expr::Product(_) => TermKind::Product,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, es: &[Expr], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (k, e) in es.iter().enumerate() {
                if k > 0 {
                    write!(f, "{sep}")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::State(i) => write!(f, "x{i}"),
            Expr::Input(j) => write!(f, "u{j}"),
            Expr::Sin(e) => write!(f, "sin({e})"),
            Expr::Sum(es) => join(f, es, " + "),
            Expr::Product(es) => join(f, es, "*"),
        }
    }
}

/// A known map `phi: R^{n_x} x R^{n_u} -> R^{n_phi}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    n_x: usize,
    n_u: usize,
    terms: Vec<Expr>,
}

impl FeatureMap {
    /// Builds a feature map, checking every coordinate reference is in range.
    pub fn new(n_x: usize, n_u: usize, terms: Vec<Expr>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("feature map needs at least one term".into()));
        }
        for (k, t) in terms.iter().enumerate() {
            let mut bad = None;
            t.visit(&mut |e| match e {
                Expr::State(i) if *i >= n_x => bad = Some(format!("x{i}")),
                Expr::Input(j) if *j >= n_u => bad = Some(format!("u{j}")),
                Expr::Const(c) if !c.is_finite() => bad = Some(format!("{c}")),
                _ => {}
            });
            if let Some(b) = bad {
                return Err(Error::Config(format!("feature {k} references {b} out of range")));
            }
        }
        Ok(Self { n_x, n_u, terms })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_phi(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Expr] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.n_phi(), self.terms.iter().map(|t| t.eval(x, u)))
    }

    /// Every node kind used by any term.
    pub fn term_kinds(&self) -> BTreeSet<TermKind> {
        let mut kinds = BTreeSet::new();
        for t in &self.terms {
            t.visit(&mut |e| {
                kinds.insert(e.kind());
            });
        }
        kinds
    }
}
