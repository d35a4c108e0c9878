//! Offline phase: weighted POD on state, control and adjoint snapshots,
//! followed by aggregation of the state and adjoint spaces.

use log::{info, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::Mode;
use crate::ocp::{solve_truth, OcpSolution};
use crate::problems::OcpDefinition;
use crate::rom::ReducedModel;
use crate::sampling::WeightedSample;
use crate::sparse::CsrMatrix;

/// Relative eigenvalue floor `λ_n > ε max|λ|`. Kept at round-off level:
/// every eigenvector lies in the snapshot span, and Gram–Schmidt with
/// [`DROP_TOL`] decides whether it still adds an independent direction.
pub const EIG_REL_TOL: f64 = 1e-16;
/// Negative eigenvalues below `-NEG_REL_TOL max|λ|` are reported.
pub const NEG_REL_TOL: f64 = 1e-12;
/// Relative residual below which Gram–Schmidt drops a column.
pub const DROP_TOL: f64 = 1e-10;

/// Block-diagonal inner product `Δt · diag(X, …, X)` over `N_t` steps
/// (`Δt = 1`, one step for steady problems).
#[derive(Debug, Clone)]
pub struct InnerProduct {
    pub base: CsrMatrix,
    pub n_t: usize,
    pub dt: f64,
}

impl InnerProduct {
    pub fn steady(base: CsrMatrix) -> Self {
        Self { base, n_t: 1, dt: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.base.nrows() * self.n_t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.base.nrows();
        let mut out = vec![0.0; v.len()];
        for j in 0..self.n_t {
            self.base.matvec_acc(self.dt, &v[j * n..(j + 1) * n], &mut out[j * n..(j + 1) * n]);
        }
        out
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.base.nrows();
        (0..self.n_t)
            .map(|j| self.base.bilinear(&a[j * n..(j + 1) * n], &b[j * n..(j + 1) * n]))
            .sum::<f64>()
            * self.dt
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).max(0.0).sqrt()
    }

    pub fn apply_mat(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.base.nrows();
        let mut out = DMatrix::zeros(s.nrows(), s.ncols());
        for j in 0..self.n_t {
            let block = self.base.mul_dense(&s.rows(j * n, n).into_owned()) * self.dt;
            out.rows_mut(j * n, n).copy_from(&block);
        }
        out
    }

    /// `Aᵀ X B`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.transpose() * self.apply_mat(b)
    }
}

/// One variable's snapshots, one column per training parameter.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub data: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub inner: InnerProduct,
}

impl SnapshotSet {
    pub fn n_train(&self) -> usize {
        self.data.ncols()
    }
}

/// Snapshots of the homogenized state, the control and the adjoint.
#[derive(Debug, Clone)]
pub struct Snapshots {
    pub y: SnapshotSet,
    pub u: SnapshotSet,
    pub p: SnapshotSet,
    pub sample: WeightedSample,
    /// Wall-clock seconds spent in the truth solves.
    pub solve_seconds: f64,
}

pub fn state_inner(problem: &OcpDefinition) -> InnerProduct {
    inner_for(problem, problem.inner_y.clone())
}

pub fn control_inner(problem: &OcpDefinition) -> InnerProduct {
    inner_for(problem, problem.inner_u.clone())
}

fn inner_for(problem: &OcpDefinition, base: CsrMatrix) -> InnerProduct {
    match problem.time {
        Some(t) => InnerProduct {
            base,
            n_t: t.n_t,
            dt: t.dt(),
        },
        None => InnerProduct::steady(base),
    }
}

fn columns(sols: &[OcpSolution], pick: impl Fn(&OcpSolution) -> &[f64]) -> DMatrix<f64> {
    let len = pick(&sols[0]).len();
    DMatrix::from_fn(len, sols.len(), |i, k| pick(&sols[k])[i])
}

/// One stabilized truth solve per training parameter, in parallel.
pub fn collect_snapshots(problem: &OcpDefinition, sample: &WeightedSample) -> Result<Snapshots> {
    if sample.is_empty() {
        return Err(Error::InvalidParameter("training sample is empty".into()));
    }
    let start = std::time::Instant::now();
    let sols = sample
        .nodes
        .par_iter()
        .map(|mu| {
            problem.check_mu(mu)?;
            solve_truth(problem, mu, Mode::Stabilized).map_err(|e| Error::SnapshotFailed {
                mu: mu.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let solve_seconds = start.elapsed().as_secs_f64();
    info!("{} snapshots of {} in {solve_seconds:.2} s", sols.len(), problem.id);
    let (xy, xu) = (state_inner(problem), control_inner(problem));
    let set = |data, inner| SnapshotSet {
        data,
        weights: sample.weights.clone(),
        inner,
    };
    Ok(Snapshots {
        y: set(columns(&sols, |s| &s.ybar), xy.clone()),
        u: set(columns(&sols, |s| &s.u), xu),
        p: set(columns(&sols, |s| &s.p), xy),
        sample: sample.clone(),
        solve_seconds,
    })
}

/// `D_kl = (s_k, s_l)_X / N_train` and `𝑾 = diag(w) D`.
pub fn weighted_correlation(s: &SnapshotSet) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = s.n_train() as f64;
    let mut d = s.inner.gram(&s.data, &s.data) / n;
    d = (&d + d.transpose()) * 0.5;
    let mut w = d.clone();
    for (k, wk) in s.weights.iter().enumerate() {
        w.row_mut(k).scale_mut(*wk);
    }
    (d, w)
}

/// Eigenpairs of `diag(w) D`, sorted by decreasing eigenvalue.
#[derive(Debug, Clone)]
pub struct WeightedEigen {
    /// Full real spectrum, descending.
    pub spectrum: Vec<f64>,
    /// Eigenvectors `g_n` (unit Euclidean norm) of the retained eigenvalues.
    pub vectors: DMatrix<f64>,
    pub diagnostics: Vec<String>,
}

impl WeightedEigen {
    pub fn retained(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn values(&self) -> &[f64] {
        &self.spectrum[..self.retained()]
    }
}

fn sym_sqrt(d: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(d.clone());
    let s = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose()
}

fn canonical_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale).copied() {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Eigen decomposition of the weighted correlation `diag(w) D`.
///
/// Nonnegative weights use the symmetric similarity `W^½ D W^½`. With
/// negative weights (sparse grids) `D^½ W D^½` is used instead; it is also
/// similar to `W D` on the range of `D`, so the spectrum stays real and
/// only the nonpositive part is discarded.
pub fn weighted_eig(weights: &[f64], d: &DMatrix<f64>) -> Result<WeightedEigen> {
    let m = weights.len();
    if d.nrows() != m || d.ncols() != m {
        return Err(Error::Numeric(format!("correlation is {}x{}, expected {m}x{m}", d.nrows(), d.ncols())));
    }
    let mut diagnostics = Vec::new();
    let negative = weights.iter().any(|&w| w < 0.0);
    let (sym, recover): (DMatrix<f64>, Box<dyn Fn(&DVector<f64>, f64) -> DVector<f64>>) = if !negative {
        let half = DVector::from_iterator(m, weights.iter().map(|w| w.sqrt()));
        let b = DMatrix::from_fn(m, m, |i, j| half[i] * d[(i, j)] * half[j]);
        (b, Box::new(move |v: &DVector<f64>, _| v.component_mul(&half)))
    } else {
        diagnostics.push(format!(
            "{} negative weights: eigenproblem solved through D^1/2 W D^1/2, nonpositive eigenvalues discarded",
            weights.iter().filter(|&&w| w < 0.0).count()
        ));
        let dh = sym_sqrt(d);
        let w = DVector::from_column_slice(weights);
        let b = &dh * DMatrix::from_diagonal(&w) * &dh;
        let b = (&b + b.transpose()) * 0.5;
        (
            b,
            Box::new(move |v: &DVector<f64>, lambda: f64| (&dh * v).component_mul(&w) / lambda),
        )
    };
    let e = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    let spectrum: Vec<f64> = order.iter().map(|&k| e.eigenvalues[k]).collect();
    let top = spectrum.first().copied().unwrap_or(0.0);
    // Relative to the largest magnitude, so that a spectrum dominated by
    // negative eigenvalues does not promote round-off to a mode.
    let scale = spectrum.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let mut vecs = Vec::new();
    if top > 0.0 {
        for (&k, &lambda) in order.iter().zip(&spectrum) {
            if lambda <= EIG_REL_TOL * scale {
                break;
            }
            let mut g = recover(&e.eigenvectors.column(k).into_owned(), lambda);
            let nrm = g.norm();
            if nrm == 0.0 {
                continue;
            }
            g /= nrm;
            canonical_sign(&mut g);
            vecs.push(g);
        }
    }
    if spectrum.iter().any(|&l| l < -NEG_REL_TOL * scale) {
        diagnostics.push("negative eigenvalues in the weighted correlation were dropped".into());
    }
    let vectors = if vecs.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&vecs)
    };
    Ok(WeightedEigen {
        spectrum,
        vectors,
        diagnostics,
    })
}

/// Modified Gram–Schmidt in the `X` inner product, applied twice. Columns
/// whose residual falls below `DROP_TOL` times their original norm are
/// dropped; returns the orthonormal columns and, for each input column, the
/// number of output columns produced so far.
pub fn orthonormalize(cols: &DMatrix<f64>, inner: &InnerProduct) -> (DMatrix<f64>, Vec<usize>) {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut xbasis: Vec<DVector<f64>> = Vec::new();
    let mut counts = Vec::with_capacity(cols.ncols());
    for c in cols.column_iter() {
        let mut v = c.into_owned();
        let n0 = inner.norm(v.as_slice());
        if n0 > 0.0 {
            for _ in 0..2 {
                for (b, xb) in basis.iter().zip(&xbasis) {
                    let a = v.dot(xb);
                    v.axpy(-a, b, 1.0);
                }
            }
            let r = inner.norm(v.as_slice());
            if r >= DROP_TOL * n0 {
                v /= r;
                xbasis.push(DVector::from_vec(inner.apply(v.as_slice())));
                basis.push(v);
            }
        }
        counts.push(basis.len());
    }
    let q = if basis.is_empty() {
        DMatrix::zeros(cols.nrows(), 0)
    } else {
        DMatrix::from_columns(&basis)
    };
    (q, counts)
}

/// First `n` wPOD modes `ζ_n = S g_n / √λ_n`, re-orthonormalized in `X`.
pub fn extract_basis(s: &SnapshotSet, eig: &WeightedEigen, n: usize) -> Result<DMatrix<f64>> {
    if n > eig.retained() {
        return Err(Error::BasisTruncation {
            requested: n,
            achievable: eig.retained(),
        });
    }
    let lambdas = eig.values();
    let mut z = &s.data * eig.vectors.columns(0, n);
    for (k, l) in lambdas.iter().take(n).enumerate() {
        z.column_mut(k).scale_mut(1.0 / l.sqrt());
    }
    let (q, _) = orthonormalize(&z, &s.inner);
    if q.ncols() < n {
        return Err(Error::BasisTruncation {
            requested: n,
            achievable: q.ncols(),
        });
    }
    Ok(q)
}

/// Aggregated state/adjoint basis: columns of both bases interleaved and
/// orthonormalized, so that the first `counts[N-1]` columns span the union
/// of the first `N` modes of each.
pub fn aggregate_spaces(basis_y: &DMatrix<f64>, basis_p: &DMatrix<f64>, inner: &InnerProduct) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if basis_y.ncols() != basis_p.ncols() || basis_y.nrows() != basis_p.nrows() {
        return Err(Error::Numeric(format!(
            "state basis is {}x{}, adjoint basis {}x{}",
            basis_y.nrows(),
            basis_y.ncols(),
            basis_p.nrows(),
            basis_p.ncols()
        )));
    }
    let n = basis_y.ncols();
    let mut cols = Vec::with_capacity(2 * n);
    for k in 0..n {
        cols.push(basis_y.column(k).into_owned());
        cols.push(basis_p.column(k).into_owned());
    }
    if cols.is_empty() {
        return Ok((DMatrix::zeros(basis_y.nrows(), 0), Vec::new()));
    }
    let (q, c) = orthonormalize(&DMatrix::from_columns(&cols), inner);
    let counts: Vec<usize> = (0..n).map(|k| c[2 * k + 1]).collect();
    if counts.last().copied().unwrap_or(0) < 2 * n {
        warn!("aggregated space has {} columns for {} state/adjoint pairs", q.ncols(), n);
    }
    Ok((q, counts))
}

/// Per-variable POD output.
#[derive(Debug, Clone)]
pub struct VariableBasis {
    pub basis: DMatrix<f64>,
    pub eigen: WeightedEigen,
}

pub fn pod_variable(s: &SnapshotSet, n_max: usize) -> Result<VariableBasis> {
    let (d, _) = weighted_correlation(s);
    let eigen = weighted_eig(&s.weights, &d)?;
    for msg in &eigen.diagnostics {
        warn!("{msg}");
    }
    let n = n_max.min(eigen.retained());
    if n < n_max {
        warn!("basis capped at {n} of {n_max} requested: spectrum is deficient");
    }
    Ok(VariableBasis {
        basis: extract_basis(s, &eigen, n)?,
        eigen,
    })
}

/// Offline algorithm: snapshots, weighted POD per variable, aggregation,
/// projection of every affine term.
pub fn run_offline(problem: &OcpDefinition, sample: &WeightedSample, n_max: usize) -> Result<ReducedModel> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("N_max must be at least 1".into()));
    }
    let snaps = collect_snapshots(problem, sample)?;
    offline_from_snapshots(problem, &snaps, n_max)
}

pub fn offline_from_snapshots(problem: &OcpDefinition, snaps: &Snapshots, n_max: usize) -> Result<ReducedModel> {
    let start = std::time::Instant::now();
    let (vy, (vu, vp)) = rayon::join(
        || pod_variable(&snaps.y, n_max),
        || rayon::join(|| pod_variable(&snaps.u, n_max), || pod_variable(&snaps.p, n_max)),
    );
    let (mut vy, mut vu, mut vp) = (vy?, vu?, vp?);
    let n = vy.basis.ncols().min(vu.basis.ncols()).min(vp.basis.ncols());
    if n == 0 {
        return Err(Error::BasisTruncation {
            requested: n_max,
            achievable: 0,
        });
    }
    for v in [&mut vy, &mut vu, &mut vp] {
        if v.basis.ncols() > n {
            v.basis = v.basis.columns(0, n).into_owned();
        }
    }
    let (agg, agg_count) = aggregate_spaces(&vy.basis, &vp.basis, &snaps.y.inner)?;
    let mut model = ReducedModel::build(problem, snaps.sample.rule, vy, vu, vp, agg, agg_count)?;
    model.n_train = snaps.sample.len();
    info!(
        "offline {} [{}]: N = {n}, aggregated {} columns, {:.2} s after snapshots",
        problem.id,
        snaps.sample.rule,
        model.agg.ncols(),
        start.elapsed().as_secs_f64()
    );
    Ok(model)
}

/// Sines of the principal angles between the spans of two `X`-orthonormal
/// bases, descending.
pub fn principal_angle_sines(q1: &DMatrix<f64>, q2: &DMatrix<f64>, inner: &InnerProduct) -> Vec<f64> {
    let c = inner.gram(q2, q1);
    let r = q1 - q2 * c;
    let g = inner.gram(&r, &r);
    let g = (&g + g.transpose()) * 0.5;
    let mut s: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `(1/N_train) Σ_k w_k ‖s_k − Π s_k‖²_X` for the `X`-orthogonal projection
/// onto the columns of `q`.
pub fn weighted_projection_error(s: &SnapshotSet, q: &DMatrix<f64>) -> f64 {
    let coeffs = s.inner.gram(q, &s.data);
    let r = &s.data - q * coeffs;
    let xr = s.inner.apply_mat(&r);
    let mut total = 0.0;
    for k in 0..s.n_train() {
        total += s.weights[k] * r.column(k).dot(&xr.column(k));
    }
    total / s.n_train() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn spd(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + i as f64 * 0.1));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    fn random_set(rows: usize, cols: usize, seed: u64, weights: Vec<f64>) -> SnapshotSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        SnapshotSet {
            data: DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)),
            weights,
            inner: InnerProduct::steady(spd(rows)),
        }
    }

    #[test]
    fn single_snapshot_correlation_and_basis() {
        let s = random_set(8, 1, 1, vec![2.5]);
        let (d, w) = weighted_correlation(&s);
        let nrm2 = s.inner.dot(s.data.as_slice(), s.data.as_slice());
        assert_relative_eq!(w[(0, 0)], 2.5 * nrm2, max_relative = 1e-14);
        assert_relative_eq!(d[(0, 0)], nrm2, max_relative = 1e-14);
        let e = weighted_eig(&s.weights, &d).unwrap();
        let q = extract_basis(&s, &e, 1).unwrap();
        let expect = &s.data / nrm2.sqrt();
        assert!((q - expect).amax() < 1e-12);
    }

    #[test]
    fn diagonal_eigenproblem() {
        let e = weighted_eig(&[3.0, 2.0, 1.0], &DMatrix::identity(3, 3)).unwrap();
        for (l, x) in e.spectrum.iter().zip([3.0, 2.0, 1.0]) {
            assert_relative_eq!(*l, x, max_relative = 1e-15);
        }
        assert!((&e.vectors - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn rank_one_correlation() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let d = &v * v.transpose();
        let w = [0.3, 1.2, 2.0];
        let e = weighted_eig(&w, &d).unwrap();
        // W v vᵀ has the single nonzero eigenvalue vᵀ W v.
        let exact: f64 = (0..3).map(|i| w[i] * v[i] * v[i]).sum();
        assert_relative_eq!(e.spectrum[0], exact, max_relative = 1e-12);
        assert_eq!(e.retained(), 1);
        assert!(e.spectrum[1].abs() < 1e-12 * exact);
    }

    #[test]
    fn matches_brute_force_nonsymmetric_eigenvalues() {
        let s = random_set(10, 3, 5, vec![0.4, 1.7, 0.9]);
        let (d, wmat) = weighted_correlation(&s);
        let e = weighted_eig(&s.weights, &d).unwrap();
        // Oracle: characteristic polynomial roots of the 3×3 W·D via its
        // invariants, checked by det(W D − λ I) = 0.
        for &l in &e.spectrum {
            let shifted = &wmat - DMatrix::identity(3, 3) * l;
            let scale = wmat.norm().powi(3);
            assert!(shifted.determinant().abs() < 1e-10 * scale, "λ = {l}");
        }
        let trace: f64 = (0..3).map(|i| wmat[(i, i)]).sum();
        assert_relative_eq!(e.spectrum.iter().sum::<f64>(), trace, max_relative = 1e-10);
        // Eigenvectors of W·D itself.
        for k in 0..e.retained() {
            let g = e.vectors.column(k);
            let r = &wmat * g - g * e.spectrum[k];
            assert!(r.norm() < 1e-10 * e.spectrum[0]);
        }
    }

    #[test]
    fn negative_weights_keep_positive_spectrum() {
        let s = random_set(12, 4, 9, vec![1.0, -0.3, 0.8, 0.5]);
        let (d, wmat) = weighted_correlation(&s);
        let e = weighted_eig(&s.weights, &d).unwrap();
        assert!(!e.diagnostics.is_empty());
        for k in 0..e.retained() {
            let g = e.vectors.column(k);
            let r = &wmat * g - g * e.spectrum[k];
            assert!(r.norm() < 1e-9 * e.spectrum[0]);
            assert!(e.spectrum[k] > 0.0);
        }
    }

    #[test]
    fn duplicated_snapshots_cap_basis() {
        let mut s = random_set(6, 1, 2, vec![1.0, 1.0, 1.0]);
        let c = s.data.column(0).into_owned();
        s.data = DMatrix::from_columns(&[c.clone(), c.clone(), c]);
        let v = pod_variable(&s, 3).unwrap();
        assert_eq!(v.basis.ncols(), 1);
        let (d, _) = weighted_correlation(&s);
        let e = weighted_eig(&s.weights, &d).unwrap();
        assert!(matches!(extract_basis(&s, &e, 2), Err(Error::BasisTruncation { achievable: 1, .. })));
    }

    #[test]
    fn independent_snapshots_are_reproduced() {
        let s = random_set(9, 5, 11, vec![0.2, 0.5, 1.0, 1.5, 3.0]);
        let v = pod_variable(&s, 5).unwrap();
        assert_eq!(v.basis.ncols(), 5);
        let coeffs = s.inner.gram(&v.basis, &s.data);
        let rec = &v.basis * coeffs;
        for k in 0..5 {
            let diff: Vec<f64> = (0..9).map(|i| rec[(i, k)] - s.data[(i, k)]).collect();
            let col: Vec<f64> = s.data.column(k).iter().copied().collect();
            assert!(s.inner.norm(&diff) <= 1e-8 * s.inner.norm(&col));
        }
    }

    #[test]
    fn aggregation_cases() {
        let s = random_set(10, 4, 3, vec![1.0; 4]);
        let v = pod_variable(&s, 2).unwrap();
        let (q, counts) = aggregate_spaces(&v.basis, &v.basis, &s.inner).unwrap();
        assert_eq!(q.ncols(), 2);
        assert_eq!(counts, vec![1, 2]);
        let b1 = v.basis.columns(0, 1).into_owned();
        let b2 = v.basis.columns(1, 1).into_owned();
        let (q, counts) = aggregate_spaces(&b1, &b2, &s.inner).unwrap();
        assert_eq!(counts, vec![2]);
        let g = s.inner.gram(&q, &q);
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn space_time_inner_product_is_dt_weighted() {
        let ip = InnerProduct {
            base: spd(3),
            n_t: 2,
            dt: 0.25,
        };
        let a = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_relative_eq!(ip.dot(&a, &a), 0.25 * (4.0 + 4.1));
        let m = DMatrix::from_column_slice(6, 1, &a);
        assert_relative_eq!(ip.gram(&m, &m)[(0, 0)], ip.dot(&a, &a));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn pod_invariants(seed in 0u64..1000, cols in 2usize..7, w in proptest::collection::vec(0.05f64..5.0, 7)) {
            let s = random_set(10, cols, seed, w[..cols].to_vec());
            let (d, wmat) = weighted_correlation(&s);
            let e = weighted_eig(&s.weights, &d).unwrap();
            let trace: f64 = (0..cols).map(|i| wmat[(i, i)]).sum();
            prop_assert!((e.spectrum.iter().sum::<f64>() - trace).abs() <= 1e-10 * trace);
            prop_assert!(e.spectrum.windows(2).all(|p| p[0] >= p[1]));
            let q = extract_basis(&s, &e, e.retained()).unwrap();
            let g = s.inner.gram(&q, &q);
            prop_assert!((g - DMatrix::identity(q.ncols(), q.ncols())).amax() <= 1e-10);
            let mut last = f64::INFINITY;
            for n in 0..=q.ncols() {
                let err = weighted_projection_error(&s, &q.columns(0, n).into_owned());
                prop_assert!(err <= last + 1e-12 * trace);
                last = err;
            }
            prop_assert!(last <= 1e-16 * trace.max(1.0) * 1e4);
        }

        #[test]
        fn uniform_weights_give_standard_pod(seed in 0u64..1000, c in 0.01f64..100.0) {
            let s = random_set(12, 6, seed, vec![1.0; 6]);
            let mut sw = s.clone();
            sw.weights = vec![c; 6];
            let a = pod_variable(&s, 6).unwrap().basis;
            let b = pod_variable(&sw, 6).unwrap().basis;
            for n in 1..=a.ncols().min(b.ncols()) {
                let sines = principal_angle_sines(&a.columns(0, n).into_owned(), &b.columns(0, n).into_owned(), &s.inner);
                prop_assert!(sines[0] <= 1e-8, "n = {}, sin = {}", n, sines[0]);
            }
        }
    }
}
