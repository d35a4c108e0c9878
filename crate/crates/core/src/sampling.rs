//! Parameter boxes with independent Beta laws, and the weighted training
//! sets built on them: Monte Carlo, Halton, tensor Gauss–Jacobi, tensor
//! Clenshaw–Curtis and isotropic Smolyak grids.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};

/// Tolerance (unit coordinates) under which sparse-grid nodes are merged.
const COALESCE_TOL: f64 = 1e-14;

/// Product of independent Beta laws, each affinely mapped onto `[a_i, b_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaParameterBox {
    pub bounds: Vec<[f64; 2]>,
    /// `(α_i, β_i)` shape pairs.
    pub shapes: Vec<[f64; 2]>,
}

impl BetaParameterBox {
    pub fn new(bounds: Vec<[f64; 2]>, shapes: Vec<[f64; 2]>) -> Result<Self> {
        if bounds.len() != shapes.len() || bounds.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "box has {} intervals but {} shape pairs",
                bounds.len(),
                shapes.len()
            )));
        }
        for (i, (b, s)) in bounds.iter().zip(&shapes).enumerate() {
            if !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite() {
                return Err(Error::InvalidParameter(format!("interval {i} is empty: {b:?}")));
            }
            if !(s[0] > 0.0 && s[1] > 0.0) {
                return Err(Error::InvalidParameter(format!("shape pair {i} must be positive: {s:?}")));
            }
        }
        Ok(Self { bounds, shapes })
    }

    /// Same box with every dimension uniform.
    pub fn uniform(bounds: Vec<[f64; 2]>) -> Result<Self> {
        let n = bounds.len();
        Self::new(bounds, vec![[1.0, 1.0]; n])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|b| b[1] - b[0]).product()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim()
            && mu.iter().zip(&self.bounds).all(|(&m, b)| {
                let tol = 1e-12 * (b[1] - b[0]);
                m >= b[0] - tol && m <= b[1] + tol
            })
    }

    fn from_unit(&self, t: &[f64]) -> Vec<f64> {
        t.iter().zip(&self.bounds).map(|(&t, b)| b[0] + t * (b[1] - b[0])).collect()
    }

    fn to_unit(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter()
            .zip(&self.bounds)
            .map(|(&m, b)| ((m - b[0]) / (b[1] - b[0])).clamp(0.0, 1.0))
            .collect()
    }

    /// Joint density with respect to Lebesgue measure on the box.
    pub fn density(&self, mu: &[f64]) -> Result<f64> {
        if !self.contains(mu) {
            return Err(Error::OutsideDomain { point: mu.to_vec() });
        }
        let t = self.to_unit(mu);
        Ok(t.iter()
            .zip(&self.shapes)
            .zip(&self.bounds)
            .map(|((&t, s), b)| beta_pdf_unit(t, s[0], s[1]) / (b[1] - b[0]))
            .product())
    }
}

/// Beta(α, β) density on `[0, 1]`.
pub fn beta_pdf_unit(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let ln_norm = -ln_beta(a, b);
    let term = |base: f64, e: f64| -> f64 {
        if e == 0.0 {
            0.0
        } else if base == 0.0 {
            if e > 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        } else {
            e * base.ln()
        }
    };
    (ln_norm + term(x, a - 1.0) + term(1.0 - x, b - 1.0)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Uniform Monte Carlo sample with unit weights (plain POD).
    #[serde(rename = "pod")]
    StandardPod,
    #[serde(rename = "mc")]
    MonteCarlo,
    #[serde(rename = "halton")]
    Halton,
    #[serde(rename = "gj-tensor")]
    GaussJacobiTensor,
    #[serde(rename = "cc-tensor")]
    ClenshawCurtisTensor,
    #[serde(rename = "smolyak-gj")]
    SmolyakGaussJacobi,
    #[serde(rename = "smolyak-cc")]
    SmolyakClenshawCurtis,
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::StandardPod,
        Rule::MonteCarlo,
        Rule::Halton,
        Rule::GaussJacobiTensor,
        Rule::ClenshawCurtisTensor,
        Rule::SmolyakGaussJacobi,
        Rule::SmolyakClenshawCurtis,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Rule::StandardPod => "pod",
            Rule::MonteCarlo => "mc",
            Rule::Halton => "halton",
            Rule::GaussJacobiTensor => "gj-tensor",
            Rule::ClenshawCurtisTensor => "cc-tensor",
            Rule::SmolyakGaussJacobi => "smolyak-gj",
            Rule::SmolyakClenshawCurtis => "smolyak-cc",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL.iter().copied().find(|r| r.tag() == s).ok_or_else(|| {
            let valid: Vec<&str> = Rule::ALL.iter().map(|r| r.tag()).collect();
            Error::config("rules", format!("unknown rule `{s}`; valid rules: {}", valid.join(", ")))
        })
    }
}

/// Training or testing set: nodes with their wPOD weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub rule: Rule,
    pub nodes: Vec<Vec<f64>>,
    /// Weights entering the weighted correlation matrix.
    pub weights: Vec<f64>,
    /// Raw quadrature weights, for quadrature-based rules.
    pub omega: Option<Vec<f64>>,
    /// Joint density at each node.
    pub rho: Vec<f64>,
    /// Smolyak level, when applicable.
    pub level: Option<usize>,
}

impl WeightedSample {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn has_negative_weights(&self) -> bool {
        self.weights.iter().any(|&w| w < 0.0)
    }

    /// One row per node: `mu_1, …, mu_d, w`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let d = self.nodes.first().map_or(0, |n| n.len());
        let header: Vec<String> = (1..=d).map(|i| format!("mu{i}")).chain(["w".to_string()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for (n, wk) in self.nodes.iter().zip(&self.weights) {
            let row: Vec<String> = n.iter().chain([wk]).map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    fn with_density(rule: Rule, bx: &BetaParameterBox, nodes: Vec<Vec<f64>>) -> Result<Self> {
        let rho = nodes.iter().map(|n| bx.density(n)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rule,
            weights: rho.clone(),
            nodes,
            omega: None,
            rho,
            level: None,
        })
    }
}

fn require_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    Ok(())
}

/// I.i.d. draws from the box's Beta law, weighted by the joint density.
pub fn sample_monte_carlo(bx: &BetaParameterBox, n: usize, seed: u64) -> Result<WeightedSample> {
    require_count(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists = bx
        .shapes
        .iter()
        .map(|s| Beta::new(s[0], s[1]).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let nodes: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let t: Vec<f64> = dists.iter().map(|d| d.sample(&mut rng)).collect();
            bx.from_unit(&t)
        })
        .collect();
    WeightedSample::with_density(Rule::MonteCarlo, bx, nodes)
}

/// Uniform draws over the box with unit weights.
pub fn sample_standard_pod(bx: &BetaParameterBox, n: usize, seed: u64) -> Result<WeightedSample> {
    let uniform = BetaParameterBox::uniform(bx.bounds.clone())?;
    let mut s = sample_monte_carlo(&uniform, n, seed)?;
    s.rule = Rule::StandardPod;
    s.rho = s.nodes.iter().map(|n| bx.density(n)).collect::<Result<Vec<_>>>()?;
    s.weights = vec![1.0; n];
    Ok(s)
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / b as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// First `n` Halton points (starting at index 1), weighted by the joint density.
pub fn sample_halton(bx: &BetaParameterBox, n: usize) -> Result<WeightedSample> {
    require_count(n)?;
    if bx.dim() > PRIMES.len() {
        return Err(Error::InvalidParameter(format!(
            "Halton sequence supports at most {} dimensions",
            PRIMES.len()
        )));
    }
    let nodes = (1..=n as u64)
        .map(|i| {
            let t: Vec<f64> = PRIMES[..bx.dim()].iter().map(|&p| radical_inverse(i, p)).collect();
            bx.from_unit(&t)
        })
        .collect();
    WeightedSample::with_density(Rule::Halton, bx, nodes)
}

/// Gauss rule for the Beta(α, β) probability measure on `[0, 1]`, via the
/// eigen-decomposition of the Jacobi matrix. Weights sum to one.
pub fn gauss_jacobi_unit(n: usize, alpha: f64, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    require_count(n)?;
    // Jacobi weight (1-t)^a (1+t)^b on [-1, 1]; x = (t+1)/2 carries x^(α-1)(1-x)^(β-1).
    let a = beta - 1.0;
    let b = alpha - 1.0;
    let ab = a + b;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        j[(k, k)] = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        if k + 1 < n {
            let m = (k + 1) as f64;
            let off2 = if m == 1.0 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                let s = 2.0 * m + ab;
                4.0 * m * (m + a) * (m + b) * (m + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            let off = off2.sqrt();
            j[(k, k + 1)] = off;
            j[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::try_new(j, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric(format!("Jacobi matrix eigen-solve failed for n = {n}")))?;
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| ((eig.eigenvalues[i] + 1.0) / 2.0, eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok((pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / total).collect()))
}

/// Clenshaw–Curtis rule with `m` Chebyshev extrema on `[-1, 1]`.
pub fn clenshaw_curtis_ref(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    require_count(m)?;
    if m == 1 {
        return Ok((vec![0.0], vec![2.0]));
    }
    let n = m - 1;
    let nf = n as f64;
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for jj in 0..m {
        // ascending order, exact symmetry so nested nodes coincide bitwise
        let j = n - jj;
        x[jj] = if 2 * j == n {
            0.0
        } else if 2 * j < n {
            (j as f64 * std::f64::consts::PI / nf).cos()
        } else {
            -((n - j) as f64 * std::f64::consts::PI / nf).cos()
        };
        let theta = j as f64 * std::f64::consts::PI / nf;
        let c = if j == 0 || j == n { 1.0 } else { 2.0 };
        let mut s = 0.0;
        for k in 1..=n / 2 {
            let bk = if 2 * k == n { 1.0 } else { 2.0 };
            s += bk / (4.0 * (k * k) as f64 - 1.0) * (2.0 * k as f64 * theta).cos();
        }
        w[jj] = c / nf * (1.0 - s);
    }
    Ok((x, w))
}

/// Clenshaw–Curtis rule on `[0, 1]` for Lebesgue measure.
fn clenshaw_curtis_unit(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w) = clenshaw_curtis_ref(m)?;
    Ok((x.iter().map(|t| (t + 1.0) / 2.0).collect(), w.iter().map(|v| v / 2.0).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussJacobi,
    ClenshawCurtis,
}

/// Number of 1D points at 0-based level `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Growth {
    /// `m = i + 1`
    #[default]
    Linear,
    /// `m = 1` at level 0, `2^i + 1` afterwards.
    Doubling,
}

impl Growth {
    pub fn points(&self, i: usize) -> usize {
        match self {
            Growth::Linear => i + 1,
            Growth::Doubling => {
                if i == 0 {
                    1
                } else {
                    (1usize << i) + 1
                }
            }
        }
    }
}

/// 1D rule on `[0,1]` for dimension `d` of the box: GJ against the Beta
/// probability measure, CC against Lebesgue measure.
fn rule_1d(bx: &BetaParameterBox, family: Family, d: usize, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match family {
        Family::GaussJacobi => gauss_jacobi_unit(m, bx.shapes[d][0], bx.shapes[d][1]),
        Family::ClenshawCurtis => clenshaw_curtis_unit(m),
    }
}

/// Tensor product of per-dimension unit rules; weights are products.
fn tensorize(rules: &[(Vec<f64>, Vec<f64>)]) -> Vec<(Vec<f64>, f64)> {
    let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for (x, w) in rules {
        let mut next = Vec::with_capacity(out.len() * x.len());
        for (p, pw) in &out {
            for (xi, wi) in x.iter().zip(w) {
                let mut q = p.clone();
                q.push(*xi);
                next.push((q, pw * wi));
            }
        }
        out = next;
    }
    out
}

fn finish_quadrature(
    rule: Rule,
    family: Family,
    bx: &BetaParameterBox,
    unit: Vec<(Vec<f64>, f64)>,
    level: Option<usize>,
) -> Result<WeightedSample> {
    let nodes: Vec<Vec<f64>> = unit.iter().map(|(t, _)| bx.from_unit(t)).collect();
    let omega: Vec<f64> = match family {
        Family::GaussJacobi => unit.iter().map(|(_, w)| *w).collect(),
        // Lebesgue measure on the box
        Family::ClenshawCurtis => unit.iter().map(|(_, w)| w * bx.volume()).collect(),
    };
    let rho = nodes.iter().map(|n| bx.density(n)).collect::<Result<Vec<_>>>()?;
    let weights = match family {
        Family::GaussJacobi => omega.clone(),
        Family::ClenshawCurtis => rho.iter().zip(&omega).map(|(r, o)| r * o).collect(),
    };
    Ok(WeightedSample {
        rule,
        nodes,
        weights,
        omega: Some(omega),
        rho,
        level,
    })
}

pub fn gauss_jacobi_tensor(bx: &BetaParameterBox, n_per_dim: &[usize]) -> Result<WeightedSample> {
    check_per_dim(bx, n_per_dim)?;
    let rules = n_per_dim
        .iter()
        .enumerate()
        .map(|(d, &m)| rule_1d(bx, Family::GaussJacobi, d, m))
        .collect::<Result<Vec<_>>>()?;
    finish_quadrature(Rule::GaussJacobiTensor, Family::GaussJacobi, bx, tensorize(&rules), None)
}

pub fn clenshaw_curtis_tensor(bx: &BetaParameterBox, n_per_dim: &[usize]) -> Result<WeightedSample> {
    check_per_dim(bx, n_per_dim)?;
    let rules = n_per_dim
        .iter()
        .enumerate()
        .map(|(d, &m)| rule_1d(bx, Family::ClenshawCurtis, d, m))
        .collect::<Result<Vec<_>>>()?;
    finish_quadrature(Rule::ClenshawCurtisTensor, Family::ClenshawCurtis, bx, tensorize(&rules), None)
}

fn check_per_dim(bx: &BetaParameterBox, n: &[usize]) -> Result<()> {
    if n.len() != bx.dim() {
        return Err(Error::InvalidParameter(format!(
            "{} point counts given for a {}-dimensional box",
            n.len(),
            bx.dim()
        )));
    }
    n.iter().try_for_each(|&m| require_count(m))
}

/// Per-dimension count for a tensor grid of roughly `target` nodes.
pub fn tensor_points_for_target(dim: usize, target: usize) -> usize {
    ((target as f64).powf(1.0 / dim as f64) + 1e-9).floor().max(1.0) as usize
}

fn multi_indices(d: usize, total: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in multi_indices(d - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smolyak combination-technique grid of 0-based `level` on the unit cube,
/// with coalesced duplicate nodes.
fn smolyak_unit(
    bx: &BetaParameterBox,
    family: Family,
    growth: Growth,
    level: usize,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let d = bx.dim();
    let mut acc: Vec<(Vec<f64>, f64)> = Vec::new();
    let lo = (level + 1).saturating_sub(d);
    for total in lo..=level {
        let q = level - total;
        let coef = if q % 2 == 0 { 1.0 } else { -1.0 } * binomial(d - 1, q);
        if coef == 0.0 {
            continue;
        }
        for idx in multi_indices(d, total) {
            let rules = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| rule_1d(bx, family, k, growth.points(i)))
                .collect::<Result<Vec<_>>>()?;
            for (node, w) in tensorize(&rules) {
                match acc
                    .iter_mut()
                    .find(|(p, _)| p.iter().zip(&node).all(|(a, b)| (a - b).abs() <= COALESCE_TOL))
                {
                    Some(slot) => slot.1 += coef * w,
                    None => acc.push((node, coef * w)),
                }
            }
        }
    }
    Ok(acc)
}

/// Smolyak grid of a fixed level.
pub fn smolyak_level(bx: &BetaParameterBox, family: Family, growth: Growth, level: usize) -> Result<WeightedSample> {
    let rule = match family {
        Family::GaussJacobi => Rule::SmolyakGaussJacobi,
        Family::ClenshawCurtis => Rule::SmolyakClenshawCurtis,
    };
    let unit = smolyak_unit(bx, family, growth, level)?;
    finish_quadrature(rule, family, bx, unit, Some(level))
}

/// Largest isotropic Smolyak grid whose cardinality does not exceed `target_n`.
pub fn smolyak_sparse(bx: &BetaParameterBox, family: Family, target_n: usize) -> Result<WeightedSample> {
    smolyak_sparse_with(bx, family, Growth::Linear, target_n)
}

pub fn smolyak_sparse_with(
    bx: &BetaParameterBox,
    family: Family,
    growth: Growth,
    target_n: usize,
) -> Result<WeightedSample> {
    require_count(target_n)?;
    let mut best = smolyak_level(bx, family, growth, 0)?;
    for level in 1.. {
        let s = smolyak_level(bx, family, growth, level)?;
        if s.len() > target_n {
            break;
        }
        best = s;
    }
    Ok(best)
}

/// Builds a training set for `rule` aiming at `target_n` nodes.
pub fn sample_for_rule(bx: &BetaParameterBox, rule: Rule, target_n: usize, seed: u64) -> Result<WeightedSample> {
    match rule {
        Rule::StandardPod => sample_standard_pod(bx, target_n, seed),
        Rule::MonteCarlo => sample_monte_carlo(bx, target_n, seed),
        Rule::Halton => sample_halton(bx, target_n),
        Rule::GaussJacobiTensor => {
            let m = tensor_points_for_target(bx.dim(), target_n);
            gauss_jacobi_tensor(bx, &vec![m; bx.dim()])
        }
        Rule::ClenshawCurtisTensor => {
            let m = tensor_points_for_target(bx.dim(), target_n);
            clenshaw_curtis_tensor(bx, &vec![m; bx.dim()])
        }
        Rule::SmolyakGaussJacobi => smolyak_sparse(bx, Family::GaussJacobi, target_n),
        Rule::SmolyakClenshawCurtis => smolyak_sparse(bx, Family::ClenshawCurtis, target_n),
    }
}
