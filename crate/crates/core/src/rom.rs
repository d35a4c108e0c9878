//! Online phase: reduced one-shot systems assembled from projected affine
//! blocks, reconstruction and error/speedup evaluation.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{AffineOperator, AffineVector, Mode, Theta};
use crate::ocp::{solve_truth, OcpSolution};
use crate::problems::{OcpDefinition, ProblemId};
use crate::sampling::{Rule, WeightedSample};
use crate::wpod::{control_inner, state_inner, InnerProduct, VariableBasis};

/// Stabilization used by the reduced system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilizationMode {
    /// SUPG only in the snapshots; plain Galerkin online.
    OfflineOnly,
    /// SUPG in the snapshots and in the reduced system.
    OfflineOnline,
}

impl StabilizationMode {
    pub const ALL: [StabilizationMode; 2] = [StabilizationMode::OfflineOnly, StabilizationMode::OfflineOnline];

    pub fn tag(&self) -> &'static str {
        match self {
            StabilizationMode::OfflineOnly => "offline-only",
            StabilizationMode::OfflineOnline => "offline-online",
        }
    }

    pub fn fem_mode(&self) -> Mode {
        match self {
            StabilizationMode::OfflineOnly => Mode::Plain,
            StabilizationMode::OfflineOnline => Mode::Stabilized,
        }
    }
}

impl std::fmt::Display for StabilizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for StabilizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StabilizationMode::ALL.iter().copied().find(|m| m.tag() == s).ok_or_else(|| {
            Error::config("modes", format!("unknown mode `{s}`; valid modes: offline-only, offline-online"))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTerm {
    pub theta: Theta,
    pub stabilized: bool,
    pub matrix: DMatrix<f64>,
}

/// `Σ_q Θ_q(μ) Â_q` with dense projected matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReducedAffine {
    pub terms: Vec<ReducedTerm>,
}

impl ReducedAffine {
    pub fn push(&mut self, theta: Theta, stabilized: bool, matrix: DMatrix<f64>) {
        let theta = theta.canonical();
        match self.terms.iter_mut().find(|t| t.theta == theta && t.stabilized == stabilized) {
            Some(t) => t.matrix += matrix,
            None => self.terms.push(ReducedTerm {
                theta,
                stabilized,
                matrix,
            }),
        }
    }

    /// Leading `rows × cols` block of the recombined matrix.
    pub fn eval(&self, mu: &[f64], mode: Mode, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows, cols);
        for t in self.terms.iter().filter(|t| mode.includes(t.stabilized)) {
            out += t.matrix.view((0, 0), (rows, cols)) * t.theta.eval(mu);
        }
        out
    }
}

/// Projected blocks of the optimality system; time structure, `Δt` and
/// `α` are folded into the matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReducedBlocks {
    /// Adjoint rows, state columns.
    pub observation: ReducedAffine,
    /// Adjoint rows, adjoint columns.
    pub adjoint: ReducedAffine,
    /// Gradient rows, control columns.
    pub control: ReducedAffine,
    /// Gradient rows, adjoint columns.
    pub gradient: ReducedAffine,
    /// State rows, state columns.
    pub state: ReducedAffine,
    /// State rows, control columns.
    pub control_state: ReducedAffine,
    /// Adjoint right-hand side (stored as single columns).
    pub rhs_adjoint: ReducedAffine,
    pub rhs_state: ReducedAffine,
}

impl ReducedBlocks {
    pub fn named(&self) -> [(&'static str, &ReducedAffine); 8] {
        [
            ("observation", &self.observation),
            ("adjoint", &self.adjoint),
            ("control", &self.control),
            ("gradient", &self.gradient),
            ("state", &self.state),
            ("control_state", &self.control_state),
            ("rhs_adjoint", &self.rhs_adjoint),
            ("rhs_state", &self.rhs_state),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut ReducedAffine); 8] {
        [
            ("observation", &mut self.observation),
            ("adjoint", &mut self.adjoint),
            ("control", &mut self.control),
            ("gradient", &mut self.gradient),
            ("state", &mut self.state),
            ("control_state", &mut self.control_state),
            ("rhs_adjoint", &mut self.rhs_adjoint),
            ("rhs_state", &mut self.rhs_state),
        ]
    }
}

/// Reduced bases and projected operators produced by the offline phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub problem: ProblemId,
    pub rule: Rule,
    pub n_vertices: usize,
    pub n_t: usize,
    pub dt: f64,
    pub alpha: f64,
    /// Number of training parameters the snapshots came from.
    pub n_train: usize,
    /// Basis size per variable.
    pub n_max: usize,
    pub basis_y: DMatrix<f64>,
    pub basis_u: DMatrix<f64>,
    pub basis_p: DMatrix<f64>,
    /// Aggregated state/adjoint basis.
    pub agg: DMatrix<f64>,
    /// `agg_count[N-1]` aggregated columns serve reduced size `N`.
    pub agg_count: Vec<usize>,
    /// Retained wPOD eigenvalues for `y`, `u`, `p`.
    pub eigenvalues: [Vec<f64>; 3],
    pub lifting: Vec<f64>,
    pub blocks: ReducedBlocks,
}

/// `Σ_j L_jᵀ A_q R_{j+shift}` for every term, `L_j`, `R_j` being the rows
/// of step `j`.
fn project_time(
    out: &mut ReducedAffine,
    op: &AffineOperator,
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
    n_t: usize,
    shift: isize,
    scale: f64,
) {
    let n = op.nrows;
    for t in &op.terms {
        let mut acc = DMatrix::zeros(left.ncols(), right.ncols());
        for j in 0..n_t {
            let k = j as isize + shift;
            if k < 0 || k >= n_t as isize {
                continue;
            }
            let r = right.rows(k as usize * n, n).into_owned();
            let ar = t.matrix.mul_dense(&r);
            acc += left.rows(j * n, n).transpose() * ar;
        }
        out.push(t.theta.clone(), t.stabilized, acc * scale);
    }
}

fn project_rhs(out: &mut ReducedAffine, v: &AffineVector, left: &DMatrix<f64>, n_t: usize, scale: f64) {
    let n = v.len;
    for t in &v.terms {
        let col = DVector::from_column_slice(&t.vector);
        let mut acc = DMatrix::zeros(left.ncols(), 1);
        for j in 0..n_t {
            acc += left.rows(j * n, n).transpose() * &col;
        }
        out.push(t.theta.clone(), t.stabilized, acc * scale);
    }
}

impl ReducedModel {
    pub fn build(
        problem: &OcpDefinition,
        rule: Rule,
        y: VariableBasis,
        u: VariableBasis,
        p: VariableBasis,
        agg: DMatrix<f64>,
        agg_count: Vec<usize>,
    ) -> Result<Self> {
        let n_max = y.basis.ncols();
        if u.basis.ncols() != n_max || p.basis.ncols() != n_max || agg_count.len() != n_max {
            return Err(Error::Numeric("state, control and adjoint bases differ in size".into()));
        }
        let (n_t, dt) = match problem.time {
            Some(t) => (t.n_t, t.dt()),
            None => (1, 1.0),
        };
        let f = &problem.forms;
        let bu = &u.basis;
        let mut b = ReducedBlocks::default();
        let a = problem.alpha;
        project_time(&mut b.observation, &f.observation, &agg, &agg, n_t, 0, dt);
        project_time(&mut b.adjoint, &f.adjoint_stiffness, &agg, &agg, n_t, 0, dt);
        project_time(&mut b.control, &f.mass, bu, bu, n_t, 0, a * dt);
        project_time(&mut b.gradient, &f.control_gradient, bu, &agg, n_t, 0, dt);
        project_time(&mut b.state, &f.stiffness, &agg, &agg, n_t, 0, dt);
        project_time(&mut b.control_state, &f.control_state, &agg, bu, n_t, 0, dt);
        if problem.time.is_some() {
            project_time(&mut b.adjoint, &f.adjoint_mass, &agg, &agg, n_t, 0, 1.0);
            project_time(&mut b.adjoint, &f.adjoint_mass, &agg, &agg, n_t, 1, -1.0);
            project_time(&mut b.state, &f.state_mass, &agg, &agg, n_t, 0, 1.0);
            project_time(&mut b.state, &f.state_mass, &agg, &agg, n_t, -1, -1.0);
        }
        project_rhs(&mut b.rhs_adjoint, &problem.rhs.adjoint, &agg, n_t, dt);
        project_rhs(&mut b.rhs_state, &problem.rhs.state, &agg, n_t, dt);
        Ok(Self {
            problem: problem.id,
            rule,
            n_vertices: problem.n(),
            n_t,
            dt,
            alpha: problem.alpha,
            n_train: y.eigen.spectrum.len(),
            n_max,
            basis_y: y.basis,
            basis_u: u.basis,
            basis_p: p.basis,
            agg,
            agg_count,
            eigenvalues: [y.eigen.values().to_vec(), u.eigen.values().to_vec(), p.eigen.values().to_vec()],
            lifting: problem.dirichlet.lifting().to_vec(),
            blocks: b,
        })
    }

    /// Dimension `2m + N` of the reduced system for basis size `n`.
    pub fn reduced_dim(&self, n: usize) -> usize {
        2 * self.agg_count[n - 1] + n
    }

    /// Dense reduced KKT matrix and right-hand side.
    pub fn assemble(&self, mu: &[f64], n: usize, mode: StabilizationMode) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if n == 0 || n > self.n_max {
            return Err(Error::InvalidParameter(format!("reduced size {n} outside 1..={}", self.n_max)));
        }
        let m = self.agg_count[n - 1];
        let fm = mode.fem_mode();
        let b = &self.blocks;
        let dim = 2 * m + n;
        let mut a = DMatrix::zeros(dim, dim);
        a.view_mut((0, 0), (m, m)).copy_from(&b.observation.eval(mu, fm, m, m));
        a.view_mut((0, m + n), (m, m)).copy_from(&b.adjoint.eval(mu, fm, m, m));
        a.view_mut((m, m), (n, n)).copy_from(&b.control.eval(mu, fm, n, n));
        a.view_mut((m, m + n), (n, m)).copy_from(&b.gradient.eval(mu, fm, n, m));
        a.view_mut((m + n, 0), (m, m)).copy_from(&b.state.eval(mu, fm, m, m));
        a.view_mut((m + n, m), (m, n)).copy_from(&b.control_state.eval(mu, fm, m, n));
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, m).copy_from(&b.rhs_adjoint.eval(mu, fm, m, 1).column(0));
        rhs.rows_mut(m + n, m).copy_from(&b.rhs_state.eval(mu, fm, m, 1).column(0));
        Ok((a, rhs))
    }

    /// Assembles and solves the reduced system; cost independent of `𝒩`.
    pub fn solve_reduced(&self, mu: &[f64], n: usize, mode: StabilizationMode) -> Result<ReducedSolution> {
        let (a, rhs) = self.assemble(mu, n, mode)?;
        let m = self.agg_count[n - 1];
        let x = a.clone().lu().solve(&rhs).filter(|x| x.iter().all(|v| v.is_finite()));
        let Some(x) = x else {
            return Err(Error::SingularReduced {
                n,
                diagnostics: reduced_diagnostics(&a, m, n),
            });
        };
        Ok(ReducedSolution {
            n,
            m,
            y: x.rows(0, m).into_owned(),
            u: x.rows(m, n).into_owned(),
            p: x.rows(m + n, m).into_owned(),
        })
    }

    /// Full-order fields `y = Σ ŷ + R_y`, `u = Ξ_u û`, `p = Σ p̂`.
    pub fn reconstruct(&self, r: &ReducedSolution) -> Reconstruction {
        let ybar = self.agg.columns(0, r.m) * &r.y;
        let u = self.basis_u.columns(0, r.n) * &r.u;
        let p = self.agg.columns(0, r.m) * &r.p;
        let nv = self.n_vertices;
        let y = ybar.iter().enumerate().map(|(k, v)| v + self.lifting[k % nv]).collect();
        Reconstruction {
            ybar: ybar.as_slice().to_vec(),
            y,
            u: u.as_slice().to_vec(),
            p: p.as_slice().to_vec(),
        }
    }
}

fn cond_estimate(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().singular_values();
    let max = s.max();
    let min = s.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn reduced_diagnostics(a: &DMatrix<f64>, m: usize, n: usize) -> String {
    format!(
        "condition estimates: observation {:.3e}, control {:.3e}, state {:.3e}, full {:.3e}",
        cond_estimate(&a.view((0, 0), (m, m)).into_owned()),
        cond_estimate(&a.view((m, m), (n, n)).into_owned()),
        cond_estimate(&a.view((m + n, 0), (m, m)).into_owned()),
        cond_estimate(a)
    )
}

/// Reduced coefficients on the aggregated (`y`, `p`) and control bases.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSolution {
    pub n: usize,
    /// Number of aggregated columns in use.
    pub m: usize,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    pub p: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub ybar: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

/// Truth solutions of a testing set with their solve times, shared by all
/// rules and modes of a benchmark.
#[derive(Debug, Clone)]
pub struct TruthCache {
    pub sample: WeightedSample,
    pub solutions: Vec<OcpSolution>,
    /// Median wall-clock seconds of the repeated truth solves.
    pub seconds: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median of `reps` timed runs; returns the last result.
fn timed<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut times = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps.max(1) {
        let t0 = Instant::now();
        last = Some(f()?);
        times.push(t0.elapsed().as_secs_f64());
    }
    Ok((last.expect("at least one repetition"), median(times)))
}

impl TruthCache {
    /// Solves the stabilized truth problem at every test node, timing each
    /// solve `reps` times sequentially so that timings are not skewed by
    /// concurrent work.
    pub fn compute(problem: &OcpDefinition, sample: &WeightedSample, reps: usize) -> Result<Self> {
        let mut solutions = Vec::with_capacity(sample.len());
        let mut seconds = Vec::with_capacity(sample.len());
        for mu in &sample.nodes {
            problem.check_mu(mu)?;
            let (s, t) = timed(reps, || solve_truth(problem, mu, Mode::Stabilized))?;
            solutions.push(s);
            seconds.push(t);
        }
        Ok(Self {
            sample: sample.clone(),
            solutions,
            seconds,
        })
    }

    /// Untimed variant solving in parallel.
    pub fn compute_untimed(problem: &OcpDefinition, sample: &WeightedSample) -> Result<Self> {
        let solutions = sample
            .nodes
            .par_iter()
            .map(|mu| {
                problem.check_mu(mu)?;
                solve_truth(problem, mu, Mode::Stabilized)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sample: sample.clone(),
            seconds: vec![f64::NAN; solutions.len()],
            solutions,
        })
    }
}

/// Mean relative errors and speedup at one reduced size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub rule: Rule,
    pub mode: StabilizationMode,
    pub n: usize,
    pub e_y: f64,
    pub e_u: f64,
    pub e_p: f64,
    pub speedup: f64,
    /// Mean median online seconds per query.
    pub online_seconds: f64,
}

fn rel_err(ip: &InnerProduct, truth: &[f64], approx: &[f64]) -> f64 {
    let d: Vec<f64> = truth.iter().zip(approx).map(|(a, b)| a - b).collect();
    let den = ip.norm(truth);
    if den > 0.0 {
        ip.norm(&d) / den
    } else {
        ip.norm(&d)
    }
}

/// Relative errors `(e_y, e_u, e_p)` of a reconstruction in the state,
/// control and adjoint norms (summed over time steps).
pub fn relative_errors(problem: &OcpDefinition, truth: &OcpSolution, r: &Reconstruction) -> [f64; 3] {
    let (xy, xu) = (state_inner(problem), control_inner(problem));
    [rel_err(&xy, &truth.y, &r.y), rel_err(&xu, &truth.u, &r.u), rel_err(&xy, &truth.p, &r.p)]
}

/// Mean errors and speedups over a testing set for each reduced size.
pub fn evaluate_test_set(
    model: &ReducedModel,
    problem: &OcpDefinition,
    truths: &TruthCache,
    n_sweep: &[usize],
    mode: StabilizationMode,
    reps: usize,
) -> Result<Vec<ErrorRow>> {
    let mut rows = Vec::with_capacity(n_sweep.len());
    for &n in n_sweep.iter().filter(|&&n| n >= 1 && n <= model.n_max) {
        let mut sums = [0.0; 3];
        let mut speed = 0.0;
        let mut online = 0.0;
        for (k, mu) in truths.sample.nodes.iter().enumerate() {
            let (red, t) = timed(reps, || model.solve_reduced(mu, n, mode))?;
            let e = relative_errors(problem, &truths.solutions[k], &model.reconstruct(&red));
            for (s, v) in sums.iter_mut().zip(e) {
                *s += v;
            }
            speed += truths.seconds[k] / t.max(1e-12);
            online += t;
        }
        let m = truths.sample.len() as f64;
        rows.push(ErrorRow {
            rule: model.rule,
            mode,
            n,
            e_y: sums[0] / m,
            e_u: sums[1] / m,
            e_p: sums[2] / m,
            speedup: speed / m,
            online_seconds: online / m,
        });
    }
    Ok(rows)
}

/// Per-`N` mean speedup of the Offline-Online reduced solve.
pub fn speedup_study(model: &ReducedModel, truths: &TruthCache, n_sweep: &[usize], reps: usize) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for &n in n_sweep.iter().filter(|&&n| n >= 1 && n <= model.n_max) {
        let mut speed = 0.0;
        for (k, mu) in truths.sample.nodes.iter().enumerate() {
            let (_, t) = timed(reps, || model.solve_reduced(mu, n, StabilizationMode::OfflineOnline))?;
            speed += truths.seconds[k] / t.max(1e-12);
        }
        out.push((n, speed / truths.sample.len() as f64));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{graetz, square, ProblemSettings, TimeGrid};
    use crate::sampling::sample_monte_carlo;
    use crate::wpod::{collect_snapshots, offline_from_snapshots, run_offline};

    fn coarse(id: ProblemId, h: f64) -> OcpDefinition {
        let mut s = ProblemSettings::defaults(id, h);
        if id.is_parabolic() {
            s.time = Some(TimeGrid::new(3, 3.0).unwrap());
        }
        crate::problems::build_problem(id, &s).unwrap()
    }

    #[test]
    fn reproduces_training_solution() {
        for id in [ProblemId::GraetzSteady, ProblemId::SquareParabolic] {
            let p = coarse(id, 0.2);
            let sample = sample_monte_carlo(&p.param_box, 4, 1).unwrap();
            let model = run_offline(&p, &sample, 4).unwrap();
            let n = model.n_max;
            assert_eq!(n, 4);
            let mu = &sample.nodes[2];
            let truth = solve_truth(&p, mu, Mode::Stabilized).unwrap();
            let r = model.reconstruct(&model.solve_reduced(mu, n, StabilizationMode::OfflineOnline).unwrap());
            let e = relative_errors(&p, &truth, &r);
            assert!(e.iter().all(|&v| v <= 1e-8), "{id}: {e:?}");
        }
    }

    #[test]
    fn projected_blocks_match_projection_of_truth() {
        let p = coarse(ProblemId::GraetzSteady, 0.2);
        let sample = sample_monte_carlo(&p.param_box, 5, 2).unwrap();
        let model = run_offline(&p, &sample, 3).unwrap();
        let mu = [3e3, 0.8];
        let m = model.agg.ncols();
        for mode in [Mode::Stabilized, Mode::Plain] {
            let direct = p.forms.stiffness.eval(&mu, mode).project(&model.agg, &model.agg);
            let online = model.blocks.state.eval(&mu, mode, m, m);
            assert!((direct - online).amax() <= 1e-10 * model.blocks.state.terms[0].matrix.amax().max(1.0));
        }
    }

    #[test]
    fn minimal_reduced_system() {
        let p = coarse(ProblemId::SquareSteady, 0.2);
        let sample = sample_monte_carlo(&p.param_box, 3, 4).unwrap();
        let model = run_offline(&p, &sample, 2).unwrap();
        assert_eq!(model.reduced_dim(1), 5);
        let r = model.solve_reduced(&[100.0, 1.2], 1, StabilizationMode::OfflineOnline).unwrap();
        assert_eq!(r.y.len(), 2);
        assert!(model.solve_reduced(&[100.0, 1.2], 0, StabilizationMode::OfflineOnline).is_err());
    }

    #[test]
    fn reconstruction_is_affine() {
        let p = coarse(ProblemId::GraetzSteady, 0.2);
        let sample = sample_monte_carlo(&p.param_box, 3, 5).unwrap();
        let model = run_offline(&p, &sample, 2).unwrap();
        let c1 = model.solve_reduced(&[10.0, 1.0], 2, StabilizationMode::OfflineOnline).unwrap();
        let c2 = model.solve_reduced(&[1e4, 0.6], 2, StabilizationMode::OfflineOnline).unwrap();
        let (a, b) = (0.3, -1.7);
        let comb = ReducedSolution {
            n: 2,
            m: c1.m,
            y: &c1.y * a + &c2.y * b,
            u: &c1.u * a + &c2.u * b,
            p: &c1.p * a + &c2.p * b,
        };
        let (r1, r2, rc) = (model.reconstruct(&c1), model.reconstruct(&c2), model.reconstruct(&comb));
        for i in 0..rc.y.len() {
            let expect = a * r1.ybar[i] + b * r2.ybar[i];
            assert!((rc.ybar[i] - expect).abs() < 1e-12);
            assert!((rc.y[i] - rc.ybar[i] - model.lifting[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn training_errors_decrease_with_n() {
        let p = coarse(ProblemId::GraetzSteady, 0.2);
        let sample = sample_monte_carlo(&p.param_box, 6, 8).unwrap();
        let snaps = collect_snapshots(&p, &sample).unwrap();
        let model = offline_from_snapshots(&p, &snaps, 6).unwrap();
        let mut last = f64::INFINITY;
        for n in 1..=model.n_max {
            let q = model.basis_y.columns(0, n).into_owned();
            let e = crate::wpod::weighted_projection_error(&snaps.y, &q);
            assert!(e <= last * (1.0 + 1e-12) + 1e-300);
            last = e;
        }
        let truths = TruthCache::compute_untimed(&p, &sample).unwrap();
        let rows = evaluate_test_set(&model, &p, &truths, &[6], StabilizationMode::OfflineOnline, 1).unwrap();
        assert!(rows[0].e_y < 1e-8 && rows[0].e_u < 1e-8 && rows[0].e_p < 1e-8, "{rows:?}");
    }

    #[test]
    fn square_model_on_fresh_parameters() {
        let p = square(&ProblemSettings::defaults(ProblemId::SquareSteady, 0.15)).unwrap();
        let sample = sample_monte_carlo(&p.param_box, 12, 3).unwrap();
        let model = run_offline(&p, &sample, 8).unwrap();
        let test = sample_monte_carlo(&p.param_box, 4, 99).unwrap();
        let truths = TruthCache::compute(&p, &test, 1).unwrap();
        let rows = evaluate_test_set(&model, &p, &truths, &[1, 4, 8], StabilizationMode::OfflineOnline, 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[2].e_y < rows[0].e_y);
        assert!(rows.iter().all(|r| r.speedup > 0.0));
        let _ = graetz;
    }
}
