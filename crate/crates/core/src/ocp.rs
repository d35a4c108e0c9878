//! One-shot optimality systems for the steady and the space-time problems.
//!
//! Unknowns are ordered `[ȳ; u; p]`, each block stacked over time steps
//! `j = 1..N_t` (one step for steady problems). Block rows are the adjoint,
//! gradient and state equations, so that with `δ = 0` the matrix is
//! symmetric.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fem::Mode;
use crate::mesh::TriangularMesh;
use crate::problems::{OcpDefinition, TimeGrid};
use crate::sparse::{norm2, CsrMatrix, SparseLu, TripletBuilder};

/// High-fidelity optimal triple. Vectors hold `N_t` consecutive blocks of
/// length `𝒩`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub n: usize,
    pub n_t: usize,
    /// Homogenized state `y − R_y`.
    pub ybar: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub relative_residual: f64,
}

impl OcpSolution {
    pub fn y_at(&self, j: usize) -> &[f64] {
        &self.y[j * self.n..(j + 1) * self.n]
    }

    pub fn u_at(&self, j: usize) -> &[f64] {
        &self.u[j * self.n..(j + 1) * self.n]
    }

    pub fn p_at(&self, j: usize) -> &[f64] {
        &self.p[j * self.n..(j + 1) * self.n]
    }
}

/// Assembled KKT matrix and right-hand side.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n: usize,
    pub n_t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Y = 0,
    U = 1,
    P = 2,
}

/// Truth operators evaluated at one parameter.
pub(crate) struct TruthOperators {
    pub obs: CsrMatrix,
    pub adj_k: CsrMatrix,
    pub adj_mass: CsrMatrix,
    pub mass: CsrMatrix,
    pub c_grad: CsrMatrix,
    pub k_s: CsrMatrix,
    pub c_s: CsrMatrix,
    pub m_s: CsrMatrix,
    pub rhs_state: Vec<f64>,
    pub rhs_adj: Vec<f64>,
}

impl TruthOperators {
    pub fn new(problem: &OcpDefinition, mu: &[f64], mode: Mode) -> Self {
        let f = &problem.forms;
        Self {
            obs: f.observation.eval(mu, mode),
            adj_k: f.adjoint_stiffness.eval(mu, mode),
            adj_mass: f.adjoint_mass.eval(mu, mode),
            mass: f.mass.eval(mu, mode),
            c_grad: f.control_gradient.eval(mu, mode),
            k_s: f.stiffness.eval(mu, mode),
            c_s: f.control_state.eval(mu, mode),
            m_s: f.state_mass.eval(mu, mode),
            rhs_state: problem.rhs.state.eval(mu, mode),
            rhs_adj: problem.rhs.adjoint.eval(mu, mode),
        }
    }
}

struct KktBuilder<'a> {
    n: usize,
    n_t: usize,
    constrained: &'a [bool],
    b: TripletBuilder,
}

impl<'a> KktBuilder<'a> {
    fn new(n: usize, n_t: usize, constrained: &'a [bool], nnz: usize) -> Self {
        let size = 3 * n * n_t;
        Self {
            n,
            n_t,
            constrained,
            b: TripletBuilder::with_capacity(size, size, nnz),
        }
    }

    fn offset(&self, v: Var, j: usize) -> usize {
        (v as usize * self.n_t + j) * self.n
    }

    fn eliminated(&self, v: Var, i: usize) -> bool {
        v != Var::U && self.constrained[i]
    }

    /// Adds `scale · a` at block (row variable, row step; column variable, column step).
    fn block(&mut self, rv: Var, rj: usize, cv: Var, cj: usize, a: &CsrMatrix, scale: f64) {
        let (r0, c0) = (self.offset(rv, rj), self.offset(cv, cj));
        for (i, j, v) in a.iter() {
            if v != 0.0 && !self.eliminated(rv, i) && !self.eliminated(cv, j) {
                self.b.push(r0 + i, c0 + j, scale * v);
            }
        }
    }

    fn finish(mut self) -> CsrMatrix {
        for j in 0..self.n_t {
            for i in 0..self.n {
                if self.constrained[i] {
                    for v in [Var::Y, Var::P] {
                        let o = self.offset(v, j);
                        self.b.push(o + i, o + i, 1.0);
                    }
                }
            }
        }
        self.b.build()
    }
}

fn check_dims(problem: &OcpDefinition, mu: &[f64]) -> Result<()> {
    if mu.len() != problem.param_box.dim() {
        return Err(Error::InvalidParameter(format!(
            "parameter has {} components, the problem expects {}",
            mu.len(),
            problem.param_box.dim()
        )));
    }
    if !(problem.alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", problem.alpha)));
    }
    Ok(())
}

/// Steady KKT matrix `[[M_obs,s, 0, K*_s], [0, αM, −M], [K_s, C_s, 0]]`
/// with Dirichlet rows and columns eliminated.
pub fn assemble_steady_kkt(problem: &OcpDefinition, mu: &[f64], mode: Mode) -> Result<KktSystem> {
    check_dims(problem, mu)?;
    let ops = TruthOperators::new(problem, mu, mode);
    Ok(steady_kkt_from(problem, &ops))
}

fn steady_kkt_from(problem: &OcpDefinition, ops: &TruthOperators) -> KktSystem {
    let n = problem.n();
    let mask = problem.dirichlet.constrained_mask();
    let nnz = ops.obs.nnz() + ops.adj_k.nnz() + ops.mass.nnz() + ops.c_grad.nnz() + ops.k_s.nnz() + ops.c_s.nnz();
    let mut kb = KktBuilder::new(n, 1, mask, nnz + 2 * n);
    kb.block(Var::Y, 0, Var::Y, 0, &ops.obs, 1.0);
    kb.block(Var::Y, 0, Var::P, 0, &ops.adj_k, 1.0);
    kb.block(Var::U, 0, Var::U, 0, &ops.mass, problem.alpha);
    kb.block(Var::U, 0, Var::P, 0, &ops.c_grad, 1.0);
    kb.block(Var::P, 0, Var::Y, 0, &ops.k_s, 1.0);
    kb.block(Var::P, 0, Var::U, 0, &ops.c_s, 1.0);
    let mut rhs = vec![0.0; 3 * n];
    rhs[..n].copy_from_slice(&ops.rhs_adj);
    rhs[2 * n..].copy_from_slice(&ops.rhs_state);
    KktSystem {
        matrix: kb.finish(),
        rhs,
        n,
        n_t: 1,
    }
}

/// Space-time KKT system of backward Euler for the state and backward Euler
/// in reversed time for the adjoint. `ybar0` is the homogenized initial
/// state (zero when omitted).
pub fn assemble_space_time_kkt(
    problem: &OcpDefinition,
    mu: &[f64],
    mode: Mode,
    ybar0: Option<&[f64]>,
) -> Result<KktSystem> {
    check_dims(problem, mu)?;
    let grid = time_grid(problem)?;
    let ops = TruthOperators::new(problem, mu, mode);
    space_time_kkt_from(problem, &ops, grid, ybar0)
}

fn time_grid(problem: &OcpDefinition) -> Result<TimeGrid> {
    problem
        .time
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no time grid", problem.id)))
}

fn space_time_kkt_from(
    problem: &OcpDefinition,
    ops: &TruthOperators,
    grid: TimeGrid,
    ybar0: Option<&[f64]>,
) -> Result<KktSystem> {
    let n = problem.n();
    let n_t = grid.n_t;
    let dt = grid.dt();
    let mask = problem.dirichlet.constrained_mask();
    let state_diag = ops.m_s.lin_comb(1.0, &ops.k_s, dt);
    let adj_diag = ops.adj_mass.lin_comb(1.0, &ops.adj_k, dt);
    let nnz = n_t * (ops.obs.nnz() + 2 * adj_diag.nnz() + ops.mass.nnz() + ops.c_grad.nnz() + 2 * state_diag.nnz() + ops.c_s.nnz());
    let mut kb = KktBuilder::new(n, n_t, mask, nnz);
    for j in 0..n_t {
        kb.block(Var::Y, j, Var::Y, j, &ops.obs, dt);
        kb.block(Var::Y, j, Var::P, j, &adj_diag, 1.0);
        if j + 1 < n_t {
            kb.block(Var::Y, j, Var::P, j + 1, &ops.adj_mass, -1.0);
        }
        kb.block(Var::U, j, Var::U, j, &ops.mass, problem.alpha * dt);
        kb.block(Var::U, j, Var::P, j, &ops.c_grad, dt);
        kb.block(Var::P, j, Var::Y, j, &state_diag, 1.0);
        if j > 0 {
            kb.block(Var::P, j, Var::Y, j - 1, &ops.m_s, -1.0);
        }
        kb.block(Var::P, j, Var::U, j, &ops.c_s, dt);
    }
    let mut rhs = vec![0.0; 3 * n * n_t];
    for j in 0..n_t {
        let (a0, s0) = ((j) * n, (2 * n_t + j) * n);
        for i in 0..n {
            rhs[a0 + i] = dt * ops.rhs_adj[i];
            rhs[s0 + i] = dt * ops.rhs_state[i];
        }
    }
    if let Some(y0) = ybar0 {
        if y0.len() != n {
            return Err(Error::InvalidParameter(format!("initial state has length {}, expected {n}", y0.len())));
        }
        let s0 = 2 * n_t * n;
        let m0 = ops.m_s.matvec(y0);
        for i in 0..n {
            if !mask[i] {
                rhs[s0 + i] += m0[i];
            }
        }
    }
    Ok(KktSystem {
        matrix: kb.finish(),
        rhs,
        n,
        n_t,
    })
}

fn block_diagnostics(ops: &TruthOperators, alpha: f64) -> String {
    format!(
        "block inf-norms: observation {:.3e}, adjoint {:.3e}, control {:.3e}, gradient coupling {:.3e}, state {:.3e}, state coupling {:.3e}",
        ops.obs.norm_inf(),
        ops.adj_k.norm_inf(),
        alpha * ops.mass.norm_inf(),
        ops.c_grad.norm_inf(),
        ops.k_s.norm_inf(),
        ops.c_s.norm_inf()
    )
}

fn solve_system(problem: &OcpDefinition, ops: &TruthOperators, sys: &KktSystem) -> Result<OcpSolution> {
    let lu = SparseLu::factor(&sys.matrix).map_err(|e| match e {
        Error::Factorization { size, diagnostics } => Error::Factorization {
            size,
            diagnostics: format!("{diagnostics}; {}", block_diagnostics(ops, problem.alpha)),
        },
        other => other,
    })?;
    let x = lu.solve(&sys.rhs).map_err(|e| match e {
        Error::Factorization { size, diagnostics } => Error::Factorization {
            size,
            diagnostics: format!("{diagnostics}; {}", block_diagnostics(ops, problem.alpha)),
        },
        other => other,
    })?;
    let mut r = sys.matrix.matvec(&x);
    for (ri, bi) in r.iter_mut().zip(&sys.rhs) {
        *ri -= bi;
    }
    let bn = norm2(&sys.rhs);
    let relative_residual = if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) };
    let (n, n_t) = (sys.n, sys.n_t);
    let len = n * n_t;
    let ybar = x[..len].to_vec();
    let u = x[len..2 * len].to_vec();
    let p = x[2 * len..].to_vec();
    let y = lift_trajectory(problem, &ybar);
    Ok(OcpSolution {
        n,
        n_t,
        ybar,
        y,
        u,
        p,
        relative_residual,
    })
}

/// Adds the lifting to every time block of a homogenized trajectory.
pub fn lift_trajectory(problem: &OcpDefinition, ybar: &[f64]) -> Vec<f64> {
    let r = problem.dirichlet.lifting();
    ybar.iter().enumerate().map(|(k, v)| v + r[k % r.len()]).collect()
}

pub fn solve_steady(problem: &OcpDefinition, mu: &[f64], mode: Mode) -> Result<OcpSolution> {
    check_dims(problem, mu)?;
    let ops = TruthOperators::new(problem, mu, mode);
    let sys = steady_kkt_from(problem, &ops);
    solve_system(problem, &ops, &sys)
}

pub fn solve_space_time(problem: &OcpDefinition, mu: &[f64], mode: Mode, ybar0: Option<&[f64]>) -> Result<OcpSolution> {
    check_dims(problem, mu)?;
    let grid = time_grid(problem)?;
    let ops = TruthOperators::new(problem, mu, mode);
    let sys = space_time_kkt_from(problem, &ops, grid, ybar0)?;
    solve_system(problem, &ops, &sys)
}

/// Steady or space-time solve, depending on the problem.
pub fn solve_truth(problem: &OcpDefinition, mu: &[f64], mode: Mode) -> Result<OcpSolution> {
    if problem.time.is_some() {
        solve_space_time(problem, mu, mode, None)
    } else {
        solve_steady(problem, mu, mode)
    }
}

/// Homogenized state for a fixed control: one solve for steady problems,
/// sequential backward Euler otherwise.
pub fn solve_state(problem: &OcpDefinition, mu: &[f64], mode: Mode, u: &[f64], ybar0: Option<&[f64]>) -> Result<Vec<f64>> {
    check_dims(problem, mu)?;
    let n = problem.n();
    let n_t = problem.n_t();
    if u.len() != n * n_t {
        return Err(Error::InvalidParameter(format!("control has length {}, expected {}", u.len(), n * n_t)));
    }
    let ops = TruthOperators::new(problem, mu, mode);
    let h = &problem.dirichlet;
    let Some(grid) = problem.time else {
        let mut b = ops.rhs_state.clone();
        ops.c_s.matvec_acc(-1.0, u, &mut b);
        h.zero_constrained(&mut b);
        return SparseLu::factor(&h.eliminate(&ops.k_s))?.solve(&b);
    };
    let dt = grid.dt();
    let lu = SparseLu::factor(&h.eliminate(&ops.m_s.lin_comb(1.0, &ops.k_s, dt)))?;
    let mut prev = match ybar0 {
        Some(y0) => y0.to_vec(),
        None => vec![0.0; n],
    };
    let mut out = Vec::with_capacity(n * n_t);
    for j in 0..n_t {
        let mut b = ops.m_s.matvec(&prev);
        for (bi, fi) in b.iter_mut().zip(&ops.rhs_state) {
            *bi += dt * fi;
        }
        ops.c_s.matvec_acc(-dt, &u[j * n..(j + 1) * n], &mut b);
        h.zero_constrained(&mut b);
        prev = lu.solve(&b)?;
        out.extend_from_slice(&prev);
    }
    Ok(out)
}

/// `½ m(y − y_d, y − y_d)_obs + (α/2) n(u, u)` with unstabilized masses;
/// time-dependent trajectories are weighted by `Δt`.
pub fn cost_functional(problem: &OcpDefinition, mu: &[f64], y: &[f64], u: &[f64]) -> f64 {
    let n = problem.n();
    let n_t = y.len() / n;
    let obs = problem.forms.observation.eval(mu, Mode::Plain);
    let mass = problem.forms.mass.eval(mu, Mode::Plain);
    let dt = problem.time.map_or(1.0, |t| t.dt());
    let mut j = 0.0;
    for k in 0..n_t {
        let e: Vec<f64> = y[k * n..(k + 1) * n].iter().zip(&problem.y_d).map(|(a, b)| a - b).collect();
        let uk = &u[k * n..(k + 1) * n];
        j += 0.5 * obs.bilinear(&e, &e) + 0.5 * problem.alpha * mass.bilinear(uk, uk);
    }
    dt * j
}

/// Forward difference of the reduced cost `J(y(u), u)` along `d`.
pub fn directional_derivative(
    problem: &OcpDefinition,
    mu: &[f64],
    mode: Mode,
    u: &[f64],
    d: &[f64],
    eps: f64,
) -> Result<f64> {
    let cost_at = |uu: &[f64]| -> Result<f64> {
        let ybar = solve_state(problem, mu, mode, uu, None)?;
        Ok(cost_functional(problem, mu, &lift_trajectory(problem, &ybar), uu))
    };
    let j0 = cost_at(u)?;
    let shifted: Vec<f64> = u.iter().zip(d).map(|(a, b)| a + eps * b).collect();
    Ok((cost_at(&shifted)? - j0) / eps)
}

/// Nodal values as CSV with columns `node,x,y,value`.
pub fn write_nodal_csv(mesh: &TriangularMesh, values: &[f64], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "node,x,y,value")?;
    for (i, (v, x)) in values.iter().zip(mesh.vertices()).enumerate() {
        writeln!(w, "{i},{},{},{v:e}", x[0], x[1])?;
    }
    Ok(())
}

/// Writes `y`, `u`, `p` for the selected time steps (all steps if empty).
pub fn export_solution(dir: &Path, problem: &OcpDefinition, sol: &OcpSolution, steps: &[usize]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let all: Vec<usize> = (0..sol.n_t).collect();
    let steps = if steps.is_empty() { &all[..] } else { steps };
    let mut written = Vec::new();
    for &j in steps {
        if j >= sol.n_t {
            return Err(Error::InvalidParameter(format!("time step {j} out of range (N_t = {})", sol.n_t)));
        }
        for (name, v) in [("y", sol.y_at(j)), ("u", sol.u_at(j)), ("p", sol.p_at(j))] {
            let file = if sol.n_t == 1 {
                dir.join(format!("{name}.csv"))
            } else {
                dir.join(format!("{name}_t{:03}.csv", j + 1))
            };
            let mut buf = Vec::new();
            write_nodal_csv(&problem.mesh, v, &mut buf).map_err(|e| Error::io(&file, e))?;
            std::fs::write(&file, buf).map_err(|e| Error::io(&file, e))?;
            written.push(file);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{graetz, square, ProblemId, ProblemSettings, TimeGrid};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn settings(id: ProblemId, h: f64, delta: f64) -> ProblemSettings {
        let mut s = ProblemSettings::defaults(id, h);
        s.delta = delta;
        if let Some(t) = s.time.as_mut() {
            t.n_t = 4;
        }
        s
    }

    fn max_asym(a: &CsrMatrix) -> f64 {
        let t = a.transpose();
        a.lin_comb(1.0, &t, -1.0).norm_inf()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let p = square(&settings(ProblemId::SquareSteady, 0.2, 1.0)).unwrap();
        let p = p
            .with_data(0.0, &[("gamma1", 0.0), ("gamma2", 0.0), ("gamma3", 0.0), ("gamma4", 0.0), ("gamma5", 0.0)])
            .unwrap();
        let s = solve_steady(&p, &[100.0, 1.2], Mode::Stabilized).unwrap();
        assert!(s.y.iter().chain(&s.u).chain(&s.p).all(|&v| v == 0.0));
        let mut q = square(&settings(ProblemId::SquareParabolic, 0.25, 1.0)).unwrap();
        q = q.with_data(0.0, &[("gamma3", 0.0)]).unwrap();
        let s = solve_space_time(&q, &[100.0, 1.2], Mode::Stabilized, None).unwrap();
        assert!(s.y.iter().chain(&s.u).chain(&s.p).all(|&v| v == 0.0));
    }

    #[test]
    fn residual_and_gradient_equation() {
        let p = graetz(&settings(ProblemId::GraetzSteady, 0.1, 1.0)).unwrap();
        let mu = [1e5, 1.5];
        let s = solve_steady(&p, &mu, Mode::Stabilized).unwrap();
        assert!(s.relative_residual <= 1e-10, "{}", s.relative_residual);
        // α M u − M p = 0 at every node
        let m = p.forms.mass.eval(&mu, Mode::Plain);
        let mut g = m.matvec(&s.u);
        m.matvec_acc(-1.0 / p.alpha, &s.p, &mut g);
        assert!(norm2(&g) <= 1e-10 * norm2(&m.matvec(&s.u)).max(1e-300));
    }

    #[test]
    fn controlled_state_tracks_target_on_observation() {
        let p = graetz(&settings(ProblemId::GraetzSteady, 0.05, 1.0)).unwrap();
        let mu = [1e5, 1.5];
        let s = solve_steady(&p, &mu, Mode::Stabilized).unwrap();
        let u0 = vec![0.0; p.n()];
        let y_free = lift_trajectory(&p, &solve_state(&p, &mu, Mode::Stabilized, &u0, None).unwrap());
        let j_opt = cost_functional(&p, &mu, &s.y, &s.u);
        let j_free = cost_functional(&p, &mu, &y_free, &u0);
        assert!(j_opt < 0.5 * j_free, "J* = {j_opt}, J(0) = {j_free}");
        // Observed nodes approach y_d = 1; nodes far upstream on the centerline stay near 0.
        let obs_nodes: Vec<usize> = (0..p.n())
            .filter(|&i| {
                let v = p.mesh.vertices()[i];
                v[0] > 1.2 && (v[1] < 0.2 || v[1] > 0.8)
            })
            .collect();
        let mean: f64 = obs_nodes.iter().map(|&i| s.y[i]).sum::<f64>() / obs_nodes.len() as f64;
        assert!((mean - 1.0).abs() < 0.3, "mean observed state {mean}");
    }

    #[test]
    fn large_penalization_switches_control_off() {
        let mut p = graetz(&settings(ProblemId::GraetzSteady, 0.1, 1.0)).unwrap();
        p.alpha = 1e6;
        let mu = [1e3, 1.0];
        let s = solve_steady(&p, &mu, Mode::Stabilized).unwrap();
        let m = p.forms.mass.eval(&mu, Mode::Plain);
        let nu = m.bilinear(&s.u, &s.u).sqrt();
        let ny = m.bilinear(&s.y, &s.y).sqrt();
        assert!(nu <= 1e-4 * ny, "|u| = {nu}, |y| = {ny}");
        let free = lift_trajectory(&p, &solve_state(&p, &mu, Mode::Stabilized, &vec![0.0; p.n()], None).unwrap());
        let diff: Vec<f64> = free.iter().zip(&s.y).map(|(a, b)| a - b).collect();
        assert!(m.bilinear(&diff, &diff).sqrt() <= 1e-4 * ny);
    }

    #[test]
    fn unstabilized_kkt_is_exactly_symmetric() {
        let p = graetz(&settings(ProblemId::GraetzSteady, 0.1, 0.0)).unwrap();
        let sys = assemble_steady_kkt(&p, &[1e4, 0.7], Mode::Stabilized).unwrap();
        assert_eq!(max_asym(&sys.matrix), 0.0);
        let q = square(&settings(ProblemId::SquareParabolic, 0.2, 0.0)).unwrap();
        let sys = assemble_space_time_kkt(&q, &[1e3, 1.0], Mode::Stabilized, None).unwrap();
        assert_eq!(sys.matrix.nrows(), q.n_total());
        assert_eq!(max_asym(&sys.matrix), 0.0);
        // State block is the transpose of the adjoint block.
        let mu = [1e4, 0.7];
        let k = p.forms.stiffness.eval(&mu, Mode::Stabilized);
        let ka = p.forms.adjoint_stiffness.eval(&mu, Mode::Stabilized);
        assert_eq!(k.transpose().lin_comb(1.0, &ka, -1.0).norm_inf(), 0.0);
        // SUPG breaks symmetry.
        let s = graetz(&settings(ProblemId::GraetzSteady, 0.1, 1.0)).unwrap();
        assert!(max_asym(&assemble_steady_kkt(&s, &mu, Mode::Stabilized).unwrap().matrix) > 0.0);
    }

    #[test]
    fn one_shot_matches_time_stepping() {
        for delta in [0.0, 1.0] {
            let q = graetz(&settings(ProblemId::GraetzParabolic, 0.2, delta)).unwrap();
            let mu = [1e4, 2.0];
            let s = solve_space_time(&q, &mu, Mode::Stabilized, None).unwrap();
            let y = solve_state(&q, &mu, Mode::Stabilized, &s.u, None).unwrap();
            let err: f64 = y.iter().zip(&s.ybar).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= 1e-10 * norm2(&s.ybar), "delta {delta}: {err}");
        }
    }

    #[test]
    fn single_time_step() {
        let mut s = settings(ProblemId::SquareParabolic, 0.2, 1.0);
        s.time = Some(TimeGrid::new(1, 0.5).unwrap());
        let q = square(&s).unwrap();
        let mu = [100.0, 1.0];
        let sol = solve_space_time(&q, &mu, Mode::Stabilized, None).unwrap();
        assert_eq!(sol.y.len(), q.n());
        // With one step, the system is a steady KKT with K replaced by M_s/Δt + K_s.
        let ops = TruthOperators::new(&q, &mu, Mode::Stabilized);
        let mut r = ops.m_s.matvec(&sol.ybar);
        ops.k_s.matvec_acc(0.5, &sol.ybar, &mut r);
        ops.c_s.matvec_acc(0.5, &sol.u, &mut r);
        for (i, ri) in r.iter().enumerate() {
            if !q.dirichlet.is_constrained(i) {
                assert!((ri - 0.5 * ops.rhs_state[i]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn first_order_optimality_unstabilized() {
        let p = square(&settings(ProblemId::SquareSteady, 0.1, 0.0)).unwrap();
        let mu = [50.0, 1.1];
        let s = solve_steady(&p, &mu, Mode::Plain).unwrap();
        let j = cost_functional(&p, &mu, &s.y, &s.u);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let d: Vec<f64> = (0..p.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            for sign in [1.0, -1.0] {
                let ds: Vec<f64> = d.iter().map(|v| sign * v).collect();
                let dd = directional_derivative(&p, &mu, Mode::Plain, &s.u, &ds, 1e-3).unwrap();
                assert!(dd >= -1e-6 * j, "{dd}");
            }
        }
    }

    #[test]
    fn cost_functional_examples() {
        let p = square(&settings(ProblemId::SquareSteady, 0.1, 1.0)).unwrap();
        let mu = [10.0, 1.0];
        let zero = vec![0.0; p.n()];
        assert_eq!(cost_functional(&p, &mu, &p.y_d.clone(), &zero), 0.0);
        let q = p.with_data(1.0, &[("gamma3", 0.0)]).unwrap();
        assert_relative_eq!(cost_functional(&q, &mu, &zero, &zero), 0.5 * 0.75 * 0.25, max_relative = 1e-12);
    }

    #[test]
    fn optimum_beats_uncontrolled_state() {
        let p = graetz(&settings(ProblemId::GraetzSteady, 0.1, 1.0)).unwrap();
        let sample = crate::sampling::sample_monte_carlo(&p.param_box, 10, 3).unwrap();
        for mu in &sample.nodes {
            let s = solve_steady(&p, mu, Mode::Stabilized).unwrap();
            let u0 = vec![0.0; p.n()];
            let y0 = lift_trajectory(&p, &solve_state(&p, mu, Mode::Stabilized, &u0, None).unwrap());
            assert!(cost_functional(&p, mu, &s.y, &s.u) <= cost_functional(&p, mu, &y0, &u0));
        }
    }

    #[test]
    fn csv_export() {
        let p = square(&settings(ProblemId::SquareSteady, 0.25, 1.0)).unwrap();
        let s = solve_steady(&p, &[10.0, 1.0], Mode::Stabilized).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = export_solution(dir.path(), &p, &s, &[]).unwrap();
        assert_eq!(files.len(), 3);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), p.n() + 1);
        assert!(text.starts_with("node,x,y,value"));
    }
}
