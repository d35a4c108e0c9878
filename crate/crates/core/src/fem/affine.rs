//! Parameter-separable operators `Σ_q Θ_q(μ) A_q`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::Point;
use crate::sparse::CsrMatrix;

/// Scalar parameter function in an affine expansion.
///
/// Kept symbolic so that a persisted reduced model can be evaluated without
/// any problem-specific code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theta {
    One,
    Mu(usize),
    InvMu(usize),
    InvSqrtMu(usize),
    Cos(usize),
    Sin(usize),
    Product(Vec<Theta>),
}

impl Theta {
    pub fn eval(&self, mu: &[f64]) -> f64 {
        match self {
            Theta::One => 1.0,
            Theta::Mu(i) => mu[*i],
            Theta::InvMu(i) => 1.0 / mu[*i],
            Theta::InvSqrtMu(i) => 1.0 / mu[*i].sqrt(),
            Theta::Cos(i) => mu[*i].cos(),
            Theta::Sin(i) => mu[*i].sin(),
            Theta::Product(f) => f.iter().map(|t| t.eval(mu)).product(),
        }
    }

    /// Product of two factors in canonical form.
    pub fn times(&self, other: &Theta) -> Theta {
        Theta::Product(vec![self.clone(), other.clone()]).canonical()
    }

    /// Flattened, sorted, with unit factors removed.
    pub fn canonical(&self) -> Theta {
        match self {
            Theta::Product(_) => {
                let mut flat = Vec::new();
                self.flatten_into(&mut flat);
                flat.retain(|t| *t != Theta::One);
                flat.sort();
                match flat.len() {
                    0 => Theta::One,
                    1 => flat.pop().unwrap(),
                    _ => Theta::Product(flat),
                }
            }
            t => t.clone(),
        }
    }

    fn flatten_into(&self, out: &mut Vec<Theta>) {
        match self {
            Theta::Product(f) => f.iter().for_each(|t| t.flatten_into(out)),
            t => out.push(t.clone()),
        }
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta::One => write!(f, "1"),
            Theta::Mu(i) => write!(f, "mu{}", i + 1),
            Theta::InvMu(i) => write!(f, "1/mu{}", i + 1),
            Theta::InvSqrtMu(i) => write!(f, "1/sqrt(mu{})", i + 1),
            Theta::Cos(i) => write!(f, "cos(mu{})", i + 1),
            Theta::Sin(i) => write!(f, "sin(mu{})", i + 1),
            Theta::Product(v) => {
                let parts: Vec<String> = v.iter().map(|t| t.to_string()).collect();
                write!(f, "{}", parts.join("*"))
            }
        }
    }
}

/// Spatial factor of an affine coefficient.
#[derive(Clone)]
pub enum Spatial {
    Const(f64),
    Fn(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl fmt::Debug for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spatial::Const(c) => write!(f, "Const({c})"),
            Spatial::Fn(_) => write!(f, "Fn(..)"),
        }
    }
}

impl Spatial {
    pub fn func(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Spatial::Fn(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Spatial::Const(c) => *c,
            Spatial::Fn(f) => f(x),
        }
    }

    pub fn times(&self, other: &Spatial) -> Spatial {
        match (self, other) {
            (Spatial::Const(a), Spatial::Const(b)) => Spatial::Const(a * b),
            (Spatial::Const(a), Spatial::Fn(g)) | (Spatial::Fn(g), Spatial::Const(a)) => {
                let (a, g) = (*a, g.clone());
                Spatial::func(move |x| a * g(x))
            }
            (Spatial::Fn(f), Spatial::Fn(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Spatial::func(move |x| f(x) * g(x))
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Spatial {
        self.times(&Spatial::Const(s))
    }
}

/// `Σ_k θ_k(μ) g_k(x)`.
#[derive(Debug, Clone, Default)]
pub struct AffineScalar {
    pub terms: Vec<(Theta, Spatial)>,
}

impl AffineScalar {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::single(Theta::One, Spatial::Const(c))
    }

    pub fn single(theta: Theta, g: Spatial) -> Self {
        Self {
            terms: vec![(theta, g)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: Point, mu: &[f64]) -> f64 {
        self.terms.iter().map(|(t, g)| t.eval(mu) * g.eval(x)).sum()
    }

    pub fn times(&self, other: &AffineScalar) -> AffineScalar {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ta, ga) in &self.terms {
            for (tb, gb) in &other.terms {
                terms.push((ta.times(tb), ga.times(gb)));
            }
        }
        AffineScalar { terms }
    }

    pub fn scaled(&self, s: f64) -> AffineScalar {
        AffineScalar {
            terms: self.terms.iter().map(|(t, g)| (t.clone(), g.scaled(s))).collect(),
        }
    }
}

/// Which stabilization contributions take part in an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Stabilized,
    Plain,
}

impl Mode {
    pub fn includes(&self, stabilized_term: bool) -> bool {
        matches!(self, Mode::Stabilized) || !stabilized_term
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineTerm {
    pub theta: Theta,
    /// Whether the term comes from SUPG stabilization.
    pub stabilized: bool,
    pub matrix: CsrMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineOperator {
    pub nrows: usize,
    pub ncols: usize,
    pub terms: Vec<AffineTerm>,
}

impl AffineOperator {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            terms: Vec::new(),
        }
    }

    /// Adds a term, merging it into an existing one with the same factor.
    pub fn push(&mut self, theta: Theta, stabilized: bool, matrix: CsrMatrix) {
        assert_eq!((matrix.nrows(), matrix.ncols()), (self.nrows, self.ncols));
        let theta = theta.canonical();
        if matrix.nnz() == 0 {
            return;
        }
        match self.terms.iter_mut().find(|t| t.theta == theta && t.stabilized == stabilized) {
            Some(t) => t.matrix = t.matrix.lin_comb(1.0, &matrix, 1.0),
            None => self.terms.push(AffineTerm {
                theta,
                stabilized,
                matrix,
            }),
        }
    }

    pub fn extend(&mut self, other: AffineOperator, scale: f64) {
        for t in other.terms {
            self.push(t.theta, t.stabilized, t.matrix.scaled(scale));
        }
    }

    pub fn transpose(&self) -> AffineOperator {
        AffineOperator {
            nrows: self.ncols,
            ncols: self.nrows,
            terms: self
                .terms
                .iter()
                .map(|t| AffineTerm {
                    theta: t.theta.clone(),
                    stabilized: t.stabilized,
                    matrix: t.matrix.transpose(),
                })
                .collect(),
        }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn active(&self, mode: Mode) -> impl Iterator<Item = &AffineTerm> {
        self.terms.iter().filter(move |t| mode.includes(t.stabilized))
    }

    pub fn eval(&self, mu: &[f64], mode: Mode) -> CsrMatrix {
        CsrMatrix::combine(
            self.active(mode).map(|t| (t.theta.eval(mu), &t.matrix)),
            self.nrows,
            self.ncols,
        )
    }

    /// `Σ_q Θ_q(μ) A_q x` for every active term.
    pub fn apply(&self, mu: &[f64], mode: Mode, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for t in self.active(mode) {
            t.matrix.matvec_acc(t.theta.eval(mu), x, &mut y);
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineVectorTerm {
    pub theta: Theta,
    pub stabilized: bool,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineVector {
    pub len: usize,
    pub terms: Vec<AffineVectorTerm>,
}

impl AffineVector {
    pub fn new(len: usize) -> Self {
        Self { len, terms: Vec::new() }
    }

    pub fn push(&mut self, theta: Theta, stabilized: bool, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.len);
        let theta = theta.canonical();
        if vector.iter().all(|&v| v == 0.0) {
            return;
        }
        match self.terms.iter_mut().find(|t| t.theta == theta && t.stabilized == stabilized) {
            Some(t) => t.vector.iter_mut().zip(&vector).for_each(|(a, b)| *a += b),
            None => self.terms.push(AffineVectorTerm {
                theta,
                stabilized,
                vector,
            }),
        }
    }

    pub fn extend(&mut self, other: AffineVector) {
        for t in other.terms {
            self.push(t.theta, t.stabilized, t.vector);
        }
    }

    /// Affine vector `scale · A x` for each term of `op`.
    pub fn from_operator_action(op: &AffineOperator, x: &[f64], scale: f64) -> Self {
        let mut v = AffineVector::new(op.nrows);
        for t in &op.terms {
            let mut y = t.matrix.matvec(x);
            y.iter_mut().for_each(|e| *e *= scale);
            v.push(t.theta.clone(), t.stabilized, y);
        }
        v
    }

    pub fn active(&self, mode: Mode) -> impl Iterator<Item = &AffineVectorTerm> {
        self.terms.iter().filter(move |t| mode.includes(t.stabilized))
    }

    pub fn eval(&self, mu: &[f64], mode: Mode) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for t in self.active(mode) {
            let c = t.theta.eval(mu);
            out.iter_mut().zip(&t.vector).for_each(|(o, v)| *o += c * v);
        }
        out
    }
}
