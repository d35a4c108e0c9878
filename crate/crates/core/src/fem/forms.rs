//! Affine assembly of the Galerkin and SUPG forms of the optimality system.
//!
//! Row index = test function, column index = trial function. With
//! `T_SS q = η·∇q + ½(div η) q` and `τ_K = δ_K h_K / |η|` the assembled
//! operators are
//!
//! | operator             | form                                             |
//! |----------------------|--------------------------------------------------|
//! | `stiffness`          | `a(y,q) + Σ τ (η·∇y, T_SS q)`                    |
//! | `adjoint_stiffness`  | `a(z,p) + Σ τ (η·∇p + (div η) p, T_SS z)`        |
//! | `control_state`      | `−(u,q) − Σ τ (u, T_SS q)`                       |
//! | `control_gradient`   | `−(v,p)`                                         |
//! | `mass`               | `(u,v)`                                          |
//! | `state_mass`         | `(y,q) + Σ τ (y, T_SS q)`                        |
//! | `adjoint_mass`       | `(p,z) − Σ τ (p, T_SS z)`                        |
//! | `observation`        | `(y,z)_obs − Σ_obs τ (y, T_SS z)`                |
//! | `forcing`            | `(f,q) + Σ τ (f, T_SS q)`                        |
//!
//! Coefficients are given on a reference domain split into subdomains; each
//! subdomain carries a scale for Galerkin mass-type terms (the Jacobian of
//! a geometric map) and a scale for τ. SUPG contributions are integrated in
//! reference coordinates.

use crate::error::{Error, Result};
use crate::fem::affine::{AffineOperator, AffineScalar, AffineVector, Spatial, Theta};
use crate::fem::element::{assemble_bilinear, assemble_linear, Op};
use crate::mesh::{Point, RegionMask, TriangularMesh};

/// Below this barycentric `|η|` a triangle is considered advection-free.
const ETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SubdomainCoefficients {
    pub label: String,
    /// Diagonal diffusion tensor `(γ_x, γ_y)`.
    pub diffusion: [AffineScalar; 2],
    pub eta: [AffineScalar; 2],
    pub div_eta: AffineScalar,
    pub forcing: AffineScalar,
    pub mass_scale: AffineScalar,
    pub tau_scale: AffineScalar,
}

impl SubdomainCoefficients {
    /// Isotropic diffusion, unit scales, no forcing.
    pub fn isotropic(label: &str, gamma: AffineScalar, eta: [AffineScalar; 2]) -> Self {
        Self {
            label: label.to_string(),
            diffusion: [gamma.clone(), gamma],
            eta,
            div_eta: AffineScalar::zero(),
            forcing: AffineScalar::zero(),
            mass_scale: AffineScalar::constant(1.0),
            tau_scale: AffineScalar::constant(1.0),
        }
    }
}

/// Piecewise-defined γ, η, f with their affine expansions.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub subdomains: Vec<SubdomainCoefficients>,
    /// Parameter-independent `|η|` entering `τ_K = δ_K h_K / |η|`.
    pub eta_norm: Spatial,
}

impl CoefficientField {
    fn find(&self, label: &str) -> Result<&SubdomainCoefficients> {
        self.subdomains
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| Error::Assembly(format!("no coefficients for subdomain `{label}`")))
    }

    pub fn gamma(&self, label: &str, x: Point, mu: &[f64]) -> Result<[f64; 2]> {
        let s = self.find(label)?;
        Ok([s.diffusion[0].eval(x, mu), s.diffusion[1].eval(x, mu)])
    }

    pub fn eta(&self, label: &str, x: Point, mu: &[f64]) -> Result<[f64; 2]> {
        let s = self.find(label)?;
        Ok([s.eta[0].eval(x, mu), s.eta[1].eval(x, mu)])
    }

    /// Checks `γ > 0` at every barycenter for the given parameter.
    pub fn validate(&self, mesh: &TriangularMesh, mu: &[f64]) -> Result<()> {
        for k in 0..mesh.n_triangles() {
            let g = self.gamma(mesh.subdomain_label_of(k), mesh.barycenter(k), mu)?;
            if !(g[0] > 0.0 && g[1] > 0.0) {
                return Err(Error::InvalidCoefficient(format!(
                    "diffusion {g:?} is not positive on triangle {k} at mu = {mu:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Symmetric and skew-symmetric parts of `T y = −γΔy + η·∇y` acting on P1
/// functions, where the second-order term vanishes element-wise.
pub struct SplitOperator<'a> {
    eta: &'a [AffineScalar; 2],
    div: &'a AffineScalar,
}

pub fn split_operator<'a>(eta: &'a [AffineScalar; 2], div: &'a AffineScalar) -> SplitOperator<'a> {
    SplitOperator { eta, div }
}

impl SplitOperator<'_> {
    /// `T_S y = −½ (div η) y`
    pub fn symmetric(&self, x: Point, mu: &[f64], value: f64) -> f64 {
        -0.5 * self.div.eval(x, mu) * value
    }

    /// `T_SS y = η·∇y + ½ (div η) y`
    pub fn skew(&self, x: Point, mu: &[f64], value: f64, grad: [f64; 2]) -> f64 {
        self.eta[0].eval(x, mu) * grad[0] + self.eta[1].eval(x, mu) * grad[1] + 0.5 * self.div.eval(x, mu) * value
    }
}

/// Reference stabilization weights `δ_K h_K / |η(barycenter)|`.
pub fn stabilization_weights(mesh: &TriangularMesh, field: &CoefficientField, delta: &[f64]) -> Result<Vec<f64>> {
    if delta.len() != mesh.n_triangles() {
        return Err(Error::InvalidParameter(format!(
            "{} stabilization parameters for {} triangles",
            delta.len(),
            mesh.n_triangles()
        )));
    }
    let mut tau = Vec::with_capacity(delta.len());
    for (k, &d) in delta.iter().enumerate() {
        if !(d >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta_K = {d} on triangle {k} is negative")));
        }
        let e = field.eta_norm.eval(mesh.barycenter(k)).abs();
        if e >= ETA_FLOOR {
            tau.push(d * mesh.h_k()[k] / e);
        } else if d == 0.0 || mesh.coords(k).iter().all(|&v| field.eta_norm.eval(v).abs() < ETA_FLOOR) {
            tau.push(0.0);
        } else {
            return Err(Error::StabilizationSingularity {
                triangle: k,
                reason: "|eta| vanishes at the barycenter but not on the whole triangle".into(),
            });
        }
    }
    Ok(tau)
}

/// Uniform `δ_K`.
pub fn uniform_delta(mesh: &TriangularMesh, delta: f64) -> Vec<f64> {
    vec![delta; mesh.n_triangles()]
}

type OpTerm = (Theta, Spatial, Op);

/// `η·∇w` as a list of affine derivative terms.
fn advective(eta: &[AffineScalar; 2]) -> Vec<OpTerm> {
    let mut out = Vec::new();
    for (axis, comp) in eta.iter().enumerate() {
        for (t, g) in &comp.terms {
            out.push((t.clone(), g.clone(), Op::grad(axis)));
        }
    }
    out
}

/// `T_SS w = η·∇w + ½ (div η) w`.
fn skew_terms(s: &SubdomainCoefficients) -> Vec<OpTerm> {
    let mut out = advective(&s.eta);
    for (t, g) in &s.div_eta.terms {
        out.push((t.clone(), g.scaled(0.5), Op::Val));
    }
    out
}

fn value_term() -> Vec<OpTerm> {
    vec![(Theta::One, Spatial::Const(1.0), Op::Val)]
}

struct Assembler<'a> {
    mesh: &'a TriangularMesh,
    field: &'a CoefficientField,
    tau: Vec<f64>,
    masks: Vec<RegionMask>,
}

impl<'a> Assembler<'a> {
    fn new(mesh: &'a TriangularMesh, field: &'a CoefficientField, delta: &[f64]) -> Result<Self> {
        let masks = field
            .subdomains
            .iter()
            .map(|s| mesh.subdomain_mask(&s.label).map_err(|e| Error::Assembly(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let covered = masks.iter().fold(RegionMask::none(mesh.n_triangles()), |a, m| a.union(m));
        if covered.len() != mesh.n_triangles() {
            return Err(Error::Assembly(format!(
                "coefficients cover {} of {} triangles",
                covered.len(),
                mesh.n_triangles()
            )));
        }
        Ok(Self {
            mesh,
            field,
            tau: stabilization_weights(mesh, field, delta)?,
            masks,
        })
    }

    fn n(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// Galerkin term `Σ θ ∫ scale·g (trial)(test)` over a subdomain ∩ region.
    fn galerkin(
        &self,
        op: &mut AffineOperator,
        sub: usize,
        region: Option<&RegionMask>,
        coef: &AffineScalar,
        trial: Op,
        test: Op,
        sign: f64,
    ) {
        let m = &self.masks[sub];
        for (t, g) in &coef.terms {
            let a = assemble_bilinear(
                self.mesh,
                |k| if m.contains(k) && region.is_none_or(|r| r.contains(k)) { sign } else { 0.0 },
                g,
                trial,
                test,
            );
            op.push(t.clone(), false, a);
        }
    }

    /// SUPG term `sign · Σ_K τ_K (trial-expression, test-expression)_K`.
    fn supg(
        &self,
        op: &mut AffineOperator,
        sub: usize,
        region: Option<&RegionMask>,
        trial: &[OpTerm],
        test: &[OpTerm],
        sign: f64,
    ) {
        let m = &self.masks[sub];
        let s = &self.field.subdomains[sub];
        for (tt, gt) in &s.tau_scale.terms {
            for (t1, g1, o1) in trial {
                for (t2, g2, o2) in test {
                    let g = gt.times(g1).times(g2);
                    let a = assemble_bilinear(
                        self.mesh,
                        |k| {
                            if m.contains(k) && region.is_none_or(|r| r.contains(k)) {
                                sign * self.tau[k]
                            } else {
                                0.0
                            }
                        },
                        &g,
                        *o1,
                        *o2,
                    );
                    op.push(tt.times(t1).times(t2), true, a);
                }
            }
        }
    }

    /// Galerkin part of `a(y, q)`.
    fn galerkin_stiffness(&self) -> AffineOperator {
        let mut op = AffineOperator::new(self.n(), self.n());
        for (i, s) in self.field.subdomains.iter().enumerate() {
            self.galerkin(&mut op, i, None, &s.diffusion[0], Op::Dx, Op::Dx, 1.0);
            self.galerkin(&mut op, i, None, &s.diffusion[1], Op::Dy, Op::Dy, 1.0);
            self.galerkin(&mut op, i, None, &s.eta[0], Op::Dx, Op::Val, 1.0);
            self.galerkin(&mut op, i, None, &s.eta[1], Op::Dy, Op::Val, 1.0);
        }
        op
    }

    /// `sign · (w, v)` scaled per subdomain, optionally restricted.
    fn galerkin_mass(&self, region: Option<&RegionMask>, sign: f64) -> AffineOperator {
        let mut op = AffineOperator::new(self.n(), self.n());
        for (i, s) in self.field.subdomains.iter().enumerate() {
            self.galerkin(&mut op, i, region, &s.mass_scale, Op::Val, Op::Val, sign);
        }
        op
    }

    /// `sign · Σ τ (w, T_SS v)` over an optional region.
    fn supg_mass(&self, region: Option<&RegionMask>, sign: f64) -> AffineOperator {
        let mut op = AffineOperator::new(self.n(), self.n());
        for (i, s) in self.field.subdomains.iter().enumerate() {
            self.supg(&mut op, i, region, &value_term(), &skew_terms(s), sign);
        }
        op
    }

    fn forcing(&self) -> AffineVector {
        let mut v = AffineVector::new(self.n());
        for (i, s) in self.field.subdomains.iter().enumerate() {
            let m = &self.masks[i];
            let f_scaled = s.forcing.times(&s.mass_scale);
            for (t, g) in &f_scaled.terms {
                let b = assemble_linear(self.mesh, |k| if m.contains(k) { 1.0 } else { 0.0 }, g, Op::Val);
                v.push(t.clone(), false, b);
            }
            let stab = s.forcing.times(&s.tau_scale);
            for (tf, gf) in &stab.terms {
                for (ts, gs, o) in skew_terms(s) {
                    let g = gf.times(&gs);
                    let b = assemble_linear(self.mesh, |k| if m.contains(k) { self.tau[k] } else { 0.0 }, &g, o);
                    v.push(tf.times(&ts), true, b);
                }
            }
        }
        v
    }
}

/// Operators of the state equation.
#[derive(Debug, Clone)]
pub struct StateForms {
    pub stiffness: AffineOperator,
    pub control_state: AffineOperator,
    pub state_mass: AffineOperator,
    pub forcing: AffineVector,
}

/// Operators of the adjoint equation.
#[derive(Debug, Clone)]
pub struct AdjointForms {
    pub adjoint_stiffness: AffineOperator,
    pub adjoint_mass: AffineOperator,
    pub observation: AffineOperator,
    /// Observation operator applied to the desired state.
    pub observation_rhs: AffineVector,
}

/// All affine operators of the optimality system.
#[derive(Debug, Clone)]
pub struct AffineForms {
    pub n: usize,
    pub stiffness: AffineOperator,
    pub adjoint_stiffness: AffineOperator,
    pub mass: AffineOperator,
    pub control_state: AffineOperator,
    pub control_gradient: AffineOperator,
    pub state_mass: AffineOperator,
    pub adjoint_mass: AffineOperator,
    pub observation: AffineOperator,
    pub forcing: AffineVector,
    pub observation_rhs: AffineVector,
}

pub fn assemble_state_forms(mesh: &TriangularMesh, field: &CoefficientField, delta: &[f64]) -> Result<StateForms> {
    let asm = Assembler::new(mesh, field, delta)?;
    let mut stiffness = asm.galerkin_stiffness();
    for (i, s) in field.subdomains.iter().enumerate() {
        asm.supg(&mut stiffness, i, None, &advective(&s.eta), &skew_terms(s), 1.0);
    }
    let mut control_state = asm.galerkin_mass(None, -1.0);
    control_state.extend(asm.supg_mass(None, -1.0), 1.0);
    let mut state_mass = asm.galerkin_mass(None, 1.0);
    state_mass.extend(asm.supg_mass(None, 1.0), 1.0);
    Ok(StateForms {
        stiffness,
        control_state,
        state_mass,
        forcing: asm.forcing(),
    })
}

pub fn assemble_adjoint_forms(
    mesh: &TriangularMesh,
    field: &CoefficientField,
    delta: &[f64],
    y_d: &[f64],
    obs: &RegionMask,
) -> Result<AdjointForms> {
    if y_d.len() != mesh.n_vertices() || obs.n_triangles() != mesh.n_triangles() {
        return Err(Error::Assembly("desired state or observation mask does not match the mesh".into()));
    }
    let asm = Assembler::new(mesh, field, delta)?;
    let mut adjoint_stiffness = asm.galerkin_stiffness().transpose();
    for (i, s) in field.subdomains.iter().enumerate() {
        let mut trial = advective(&s.eta);
        for (t, g) in &s.div_eta.terms {
            trial.push((t.clone(), g.clone(), Op::Val));
        }
        asm.supg(&mut adjoint_stiffness, i, None, &trial, &skew_terms(s), 1.0);
    }
    let mut adjoint_mass = asm.galerkin_mass(None, 1.0);
    adjoint_mass.extend(asm.supg_mass(None, -1.0), 1.0);
    let mut observation = asm.galerkin_mass(Some(obs), 1.0);
    observation.extend(asm.supg_mass(Some(obs), -1.0), 1.0);
    let observation_rhs = AffineVector::from_operator_action(&observation, y_d, 1.0);
    Ok(AdjointForms {
        adjoint_stiffness,
        adjoint_mass,
        observation,
        observation_rhs,
    })
}

pub fn assemble_forms(
    mesh: &TriangularMesh,
    field: &CoefficientField,
    delta: &[f64],
    y_d: &[f64],
    obs: &RegionMask,
) -> Result<AffineForms> {
    let st = assemble_state_forms(mesh, field, delta)?;
    let adj = assemble_adjoint_forms(mesh, field, delta, y_d, obs)?;
    let asm = Assembler::new(mesh, field, delta)?;
    let mass = asm.galerkin_mass(None, 1.0);
    // c(v, p) = −(v, p) is symmetric, so the gradient block is −M as well.
    let control_gradient = asm.galerkin_mass(None, -1.0);
    Ok(AffineForms {
        n: mesh.n_vertices(),
        stiffness: st.stiffness,
        adjoint_stiffness: adj.adjoint_stiffness,
        mass,
        control_state: st.control_state,
        control_gradient,
        state_mass: st.state_mass,
        adjoint_mass: adj.adjoint_mass,
        observation: adj.observation,
        forcing: st.forcing,
        observation_rhs: adj.observation_rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::affine::Mode;
    use crate::mesh::{build_rect_mesh, Rect, TagScheme};
    use crate::sparse::CsrMatrix;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn const_field(gamma: f64, eta: [f64; 2]) -> CoefficientField {
        CoefficientField {
            subdomains: vec![SubdomainCoefficients::isotropic(
                "omega",
                AffineScalar::constant(gamma),
                [AffineScalar::constant(eta[0]), AffineScalar::constant(eta[1])],
            )],
            eta_norm: Spatial::Const(eta[0].hypot(eta[1])),
        }
    }

    fn unit_mesh(n: usize) -> TriangularMesh {
        build_rect_mesh(Rect::unit(), n, n, &TagScheme::sides(Rect::unit())).unwrap()
    }

    fn dense(op: &AffineOperator, mode: Mode) -> DMatrix<f64> {
        op.eval(&[], mode).to_dense()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn zero_delta_reduces_to_galerkin() {
        let mesh = unit_mesh(4);
        let field = const_field(0.1, [1.0, 0.5]);
        let yd = vec![1.0; mesh.n_vertices()];
        let obs = RegionMask::all(mesh.n_triangles());
        let f = assemble_forms(&mesh, &field, &uniform_delta(&mesh, 0.0), &yd, &obs).unwrap();
        let k = dense(&f.stiffness, Mode::Stabilized);
        assert_eq!(k, dense(&f.stiffness, Mode::Plain));
        assert_relative_eq!(max_abs(&(dense(&f.adjoint_stiffness, Mode::Stabilized) - k.transpose())), 0.0);
        let m = dense(&f.mass, Mode::Plain);
        assert_relative_eq!(max_abs(&(dense(&f.control_state, Mode::Stabilized) + &m)), 0.0);
        assert_relative_eq!(max_abs(&(dense(&f.state_mass, Mode::Stabilized) - &m)), 0.0);
        assert_relative_eq!(max_abs(&(dense(&f.adjoint_mass, Mode::Stabilized) - &m)), 0.0);
    }

    #[test]
    fn single_triangle_supg_oracle() {
        // One triangle (0,0),(1,0),(1,1): φ0 = 1−x, φ1 = x−y, φ2 = y.
        let r = Rect::unit();
        let mesh = build_rect_mesh(r, 1, 1, &TagScheme::sides(r)).unwrap();
        let field = const_field(1.0, [1.0, 0.0]);
        let mut delta = vec![0.0; 2];
        delta[0] = 1.0;
        let st = assemble_state_forms(&mesh, &field, &delta).unwrap();
        let stab = st.stiffness.eval(&[], Mode::Stabilized).lin_comb(1.0, &st.stiffness.eval(&[], Mode::Plain), -1.0);
        // h_K (∂x φ_j, ∂x φ_i)_K with ∂x φ = (−1, 1, 0), area 1/2, h_K = √2.
        let dx = [-1.0, 1.0, 0.0];
        let hk = 2f64.sqrt();
        let tri = mesh.triangles()[0];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(stab.get(tri[i], tri[j]), hk * 0.5 * dx[i] * dx[j], epsilon = 1e-14);
            }
        }
        // the other triangle has δ = 0 and contributes nothing
        assert_eq!(stab.get(3, 3), 0.0);
    }

    #[test]
    fn observation_mass_supported_on_region() {
        let r = Rect::unit();
        let mesh = build_rect_mesh(r, 1, 1, &TagScheme::sides(r)).unwrap();
        let field = const_field(1.0, [1.0, 1.0]);
        let obs = RegionMask::from_fn(2, |k| k == 1);
        let adj = assemble_adjoint_forms(&mesh, &field, &uniform_delta(&mesh, 1.0), &[0.0; 4], &obs).unwrap();
        let m = adj.observation.eval(&[], Mode::Stabilized).to_dense();
        let dofs = mesh.triangles()[1];
        for i in 0..4 {
            for j in 0..4 {
                if !(dofs.contains(&i) && dofs.contains(&j)) {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        // Dense oracle for the Galerkin part: area/12·(1 + δ_ij).
        let g = adj.observation.eval(&[], Mode::Plain).to_dense();
        for &i in &dofs {
            for &j in &dofs {
                let e = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
                assert_relative_eq!(g[(i, j)], e, epsilon = 1e-15);
            }
        }
        assert!(adj.observation_rhs.eval(&[], Mode::Stabilized).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_free_advection_is_skew_on_interior() {
        let mesh = unit_mesh(6);
        let eta_x = AffineScalar::single(Theta::One, Spatial::func(|x| 4.0 * x[1] * (1.0 - x[1])));
        let mut s = SubdomainCoefficients::isotropic("omega", AffineScalar::zero(), [eta_x, AffineScalar::zero()]);
        s.diffusion = [AffineScalar::zero(), AffineScalar::zero()];
        let field = CoefficientField {
            subdomains: vec![s],
            eta_norm: Spatial::func(|x| 4.0 * x[1] * (1.0 - x[1])),
        };
        let st = assemble_state_forms(&mesh, &field, &uniform_delta(&mesh, 0.0)).unwrap();
        let a = st.stiffness.eval(&[], Mode::Plain).to_dense();
        let sum = &a + a.transpose();
        let boundary: std::collections::HashSet<usize> =
            mesh.boundary_edges().iter().flat_map(|e| e.vertices).collect();
        let mut worst = 0.0f64;
        for i in 0..mesh.n_vertices() {
            for j in 0..mesh.n_vertices() {
                if !boundary.contains(&i) && !boundary.contains(&j) {
                    worst = worst.max(sum[(i, j)].abs());
                }
            }
        }
        assert!(worst <= 1e-10 * max_abs(&a));
    }

    #[test]
    fn manufactured_linear_solution_has_zero_residual() {
        // y = 1 + 2x − y is P1-exact; with constant coefficients −γΔy + η·∇y = η·(2,−1) =: f.
        let mesh = unit_mesh(5);
        let eta = [0.8, 0.3];
        let f_val = 2.0 * eta[0] - eta[1];
        let mut field = const_field(0.01, eta);
        field.subdomains[0].forcing = AffineScalar::constant(f_val);
        let st = assemble_state_forms(&mesh, &field, &uniform_delta(&mesh, 1.0)).unwrap();
        let k = st.stiffness.eval(&[], Mode::Stabilized);
        let f = st.forcing.eval(&[], Mode::Stabilized);
        let y: Vec<f64> = mesh.vertices().iter().map(|p| 1.0 + 2.0 * p[0] - p[1]).collect();
        let r: Vec<f64> = k.matvec(&y).iter().zip(&f).map(|(a, b)| a - b).collect();
        let boundary: std::collections::HashSet<usize> =
            mesh.boundary_edges().iter().flat_map(|e| e.vertices).collect();
        for i in 0..mesh.n_vertices() {
            if !boundary.contains(&i) {
                assert!(r[i].abs() <= 1e-10, "residual {} at {i}", r[i]);
            }
        }
    }

    #[test]
    fn split_operator_sums_to_advection() {
        let eta = [
            AffineScalar::single(Theta::One, Spatial::func(|x| x[0])),
            AffineScalar::single(Theta::Mu(0), Spatial::func(|x| x[1] * x[1])),
        ];
        let div = AffineScalar::single(Theta::One, Spatial::Const(1.0)).clone();
        let mut div_full = div.clone();
        div_full.terms.push((Theta::Mu(0), Spatial::func(|x| 2.0 * x[1])));
        let op = split_operator(&eta, &div_full);
        // Hat function φ = 1 − x − y on the reference triangle, at (0.2, 0.3).
        let x = [0.2, 0.3];
        let mu = [1.7];
        let value = 1.0 - x[0] - x[1];
        let grad = [-1.0, -1.0];
        let t = op.symmetric(x, &mu, value) + op.skew(x, &mu, value, grad);
        let eta_dot = x[0] * grad[0] + mu[0] * x[1] * x[1] * grad[1];
        assert_relative_eq!(t, eta_dot, epsilon = 1e-15);
    }

    #[test]
    fn singular_stabilization_detected() {
        let mesh = unit_mesh(2);
        let mut field = const_field(1.0, [1.0, 0.0]);
        field.eta_norm = Spatial::func(|x| if (x[0] - 1.0 / 3.0).abs() < 1e-9 { 0.0 } else { 1.0 });
        let err = stabilization_weights(&mesh, &field, &uniform_delta(&mesh, 1.0));
        assert!(matches!(err, Err(Error::StabilizationSingularity { .. })));
        field.eta_norm = Spatial::Const(0.0);
        let tau = stabilization_weights(&mesh, &field, &uniform_delta(&mesh, 1.0)).unwrap();
        assert!(tau.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn affine_sum_matches_direct_assembly() {
        // η = (cos μ, sin μ), γ = 1/μ0: compare against an assembly with the
        // coefficients frozen at μ.
        let mesh = unit_mesh(4);
        let param = CoefficientField {
            subdomains: vec![SubdomainCoefficients::isotropic(
                "omega",
                AffineScalar::single(Theta::InvMu(0), Spatial::Const(1.0)),
                [
                    AffineScalar::single(Theta::Cos(1), Spatial::Const(1.0)),
                    AffineScalar::single(Theta::Sin(1), Spatial::Const(1.0)),
                ],
            )],
            eta_norm: Spatial::Const(1.0),
        };
        let delta = uniform_delta(&mesh, 1.0);
        let aff = assemble_state_forms(&mesh, &param, &delta).unwrap();
        for mu in [[3.0, 0.2], [100.0, 1.1], [7.5, -0.4]] {
            let frozen = const_field(1.0 / mu[0], [mu[1].cos(), mu[1].sin()]);
            let direct = assemble_state_forms(&mesh, &frozen, &delta).unwrap();
            let a = aff.stiffness.eval(&mu, Mode::Stabilized);
            let b = direct.stiffness.eval(&[], Mode::Stabilized);
            let diff: CsrMatrix = a.lin_comb(1.0, &b, -1.0);
            assert!(diff.frobenius_norm() <= 1e-12 * b.frobenius_norm());
        }
    }
}
