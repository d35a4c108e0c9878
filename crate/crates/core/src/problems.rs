//! The two benchmark optimal control problems, steady and parabolic.
//!
//! * Graetz–Poiseuille flow on a channel whose second half has length `μ₂`,
//!   mapped to the reference domain `(0,2)×(0,1)`; `μ₁` is the Péclet-like
//!   diffusion parameter.
//! * A propagating front in the unit square with diffusion `1/μ₁` and
//!   advection `(cos μ₂, sin μ₂)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::dirichlet::{apply_dirichlet, LiftedRhs};
use crate::fem::element::{mass_matrix, stiffness_matrix};
use crate::fem::{
    assemble_forms, uniform_delta, AffineForms, AffineScalar, AffineVector, CoefficientField, DirichletHandler, Spatial,
    SubdomainCoefficients, Theta,
};
use crate::mesh::{build_rect_mesh, BoundarySegment, Rect, RegionMask, SubdomainBox, TagScheme, TriangularMesh};
use crate::sampling::BetaParameterBox;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemId {
    GraetzSteady,
    GraetzParabolic,
    SquareSteady,
    SquareParabolic,
}

impl ProblemId {
    pub const ALL: [ProblemId; 4] = [
        ProblemId::GraetzSteady,
        ProblemId::GraetzParabolic,
        ProblemId::SquareSteady,
        ProblemId::SquareParabolic,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            ProblemId::GraetzSteady => "graetz-steady",
            ProblemId::GraetzParabolic => "graetz-parabolic",
            ProblemId::SquareSteady => "square-steady",
            ProblemId::SquareParabolic => "square-parabolic",
        }
    }

    pub fn is_parabolic(&self) -> bool {
        matches!(self, ProblemId::GraetzParabolic | ProblemId::SquareParabolic)
    }

    pub fn is_graetz(&self) -> bool {
        matches!(self, ProblemId::GraetzSteady | ProblemId::GraetzParabolic)
    }

    /// Default parameter box and Beta shapes.
    pub fn default_box(&self) -> BetaParameterBox {
        let (bounds, shape) = match self {
            ProblemId::GraetzSteady => (vec![[1.0, 1e5], [0.5, 1.5]], [5.0, 3.0]),
            ProblemId::GraetzParabolic => (vec![[1.0, 1e5], [1.0, 3.0]], [5.0, 3.0]),
            ProblemId::SquareSteady | ProblemId::SquareParabolic => (vec![[1.0, 4e4], [0.9, 1.5]], [10.0, 10.0]),
        };
        BetaParameterBox::new(bounds, vec![shape; 2]).expect("default box is valid")
    }

    pub fn default_y_d(&self) -> f64 {
        if self.is_graetz() {
            1.0
        } else {
            0.5
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL.iter().copied().find(|p| p.tag() == s).ok_or_else(|| {
            let valid: Vec<&str> = ProblemId::ALL.iter().map(|p| p.tag()).collect();
            Error::config("problem", format!("unknown problem `{s}`; valid problems: {}", valid.join(", ")))
        })
    }
}

/// Uniform backward-Euler grid on `(0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_t: usize,
    pub t_final: f64,
}

impl TimeGrid {
    pub fn new(n_t: usize, t_final: f64) -> Result<Self> {
        if n_t == 0 || !(t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time grid needs N_t >= 1 and T > 0, got N_t = {n_t}, T = {t_final}"
            )));
        }
        Ok(Self { n_t, t_final })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_t as f64
    }
}

/// Discretization settings of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSettings {
    /// Target mesh size; the generator picks the coarsest admissible grid
    /// with diameter at most this value.
    pub h: f64,
    pub delta: f64,
    pub alpha: f64,
    pub y_d: f64,
    pub time: Option<TimeGrid>,
    pub param_box: BetaParameterBox,
}

impl ProblemSettings {
    pub fn defaults(id: ProblemId, h: f64) -> Self {
        Self {
            h,
            delta: 1.0,
            alpha: 0.01,
            y_d: id.default_y_d(),
            time: id.is_parabolic().then(|| TimeGrid { n_t: 30, t_final: 3.0 }),
            param_box: id.default_box(),
        }
    }
}

/// A fully assembled, parametrized optimal control problem.
#[derive(Debug, Clone)]
pub struct OcpDefinition {
    pub id: ProblemId,
    pub mesh: TriangularMesh,
    pub field: CoefficientField,
    pub forms: AffineForms,
    pub dirichlet: DirichletHandler,
    pub rhs: LiftedRhs,
    pub obs: RegionMask,
    pub y_d: Vec<f64>,
    pub alpha: f64,
    pub delta: f64,
    pub time: Option<TimeGrid>,
    pub param_box: BetaParameterBox,
    /// H¹ inner product for state and adjoint.
    pub inner_y: CsrMatrix,
    /// L² inner product for the control.
    pub inner_u: CsrMatrix,
}

impl OcpDefinition {
    pub fn n(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn n_t(&self) -> usize {
        self.time.map_or(1, |t| t.n_t)
    }

    /// Total number of high-fidelity unknowns `3·N_t·𝒩`.
    pub fn n_total(&self) -> usize {
        3 * self.n_t() * self.n()
    }

    /// Replaces the desired state and the Dirichlet data, reassembling the
    /// affected right-hand sides.
    pub fn with_data(mut self, y_d: f64, dirichlet: &[(&str, f64)]) -> Result<Self> {
        self.y_d = vec![y_d; self.n()];
        self.forms.observation_rhs = AffineVector::from_operator_action(&self.forms.observation, &self.y_d, 1.0);
        self.dirichlet = DirichletHandler::new(&self.mesh, dirichlet)?;
        self.rhs = apply_dirichlet(&self.forms, &self.dirichlet)?;
        Ok(self)
    }

    pub fn check_mu(&self, mu: &[f64]) -> Result<()> {
        if !self.param_box.contains(mu) {
            return Err(Error::OutsideDomain { point: mu.to_vec() });
        }
        Ok(())
    }
}

/// Smallest multiple of `m` that is at least `n`.
fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

fn ensure_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config("h", format!("mesh size must be positive, got {h}")));
    }
    Ok(())
}

fn finish(
    id: ProblemId,
    mesh: TriangularMesh,
    field: CoefficientField,
    dirichlet_data: &[(&str, f64)],
    obs: RegionMask,
    settings: &ProblemSettings,
) -> Result<OcpDefinition> {
    if !(settings.alpha > 0.0) {
        return Err(Error::config("alpha", "penalization must be positive"));
    }
    if id.is_parabolic() != settings.time.is_some() {
        return Err(Error::config("time", format!("{id} needs a time grid iff it is parabolic")));
    }
    let y_d = vec![settings.y_d; mesh.n_vertices()];
    let forms = assemble_forms(&mesh, &field, &uniform_delta(&mesh, settings.delta), &y_d, &obs)?;
    let dirichlet = DirichletHandler::new(&mesh, dirichlet_data)?;
    let rhs = apply_dirichlet(&forms, &dirichlet)?;
    let mass = mass_matrix(&mesh);
    let inner_y = stiffness_matrix(&mesh).lin_comb(1.0, &mass, 1.0);
    Ok(OcpDefinition {
        id,
        mesh,
        field,
        forms,
        dirichlet,
        rhs,
        obs,
        y_d,
        alpha: settings.alpha,
        delta: settings.delta,
        time: settings.time,
        param_box: settings.param_box.clone(),
        inner_y,
        inner_u: mass,
    })
}

/// Graetz mesh on `(0,2)×(0,1)`: `nx = 2·ny`, `ny` a multiple of 5 so
/// that `x = 1` and `y ∈ {0.2, 0.8}` are grid lines.
pub fn graetz_mesh(h: f64) -> Result<TriangularMesh> {
    ensure_h(h)?;
    let ny = round_up(crate::mesh::cells_for_h(1.0, h), 5);
    graetz_mesh_cells(2 * ny, ny)
}

pub fn graetz_mesh_cells(nx: usize, ny: usize) -> Result<TriangularMesh> {
    let r = Rect::new(0.0, 2.0, 0.0, 1.0);
    let tags = TagScheme {
        segments: vec![
            BoundarySegment::new("gamma1", [0.0, 0.0], [1.0, 0.0]),
            BoundarySegment::new("gamma2", [1.0, 0.0], [2.0, 0.0]),
            BoundarySegment::new("gamma3", [2.0, 0.0], [2.0, 1.0]),
            BoundarySegment::new("gamma4", [2.0, 1.0], [1.0, 1.0]),
            BoundarySegment::new("gamma5", [1.0, 1.0], [0.0, 1.0]),
            BoundarySegment::new("gamma6", [0.0, 1.0], [0.0, 0.0]),
        ],
        subdomains: vec![
            SubdomainBox {
                label: "omega1".into(),
                region: Rect::new(0.0, 1.0, 0.0, 1.0),
            },
            SubdomainBox {
                label: "omega2".into(),
                region: Rect::new(1.0, 2.0, 0.0, 1.0),
            },
        ],
        default_subdomain: "omega1".into(),
        required_x_lines: vec![1.0],
    };
    build_rect_mesh(r, nx, ny, &tags)
}

/// Poiseuille profile `4y(1−y)`.
fn poiseuille() -> Spatial {
    Spatial::func(|x| 4.0 * x[1] * (1.0 - x[1]))
}

/// Coefficients of the Graetz problem on the reference domain.
pub fn graetz_coefficients() -> CoefficientField {
    let eta = || [AffineScalar::single(Theta::One, poiseuille()), AffineScalar::zero()];
    let omega1 = SubdomainCoefficients::isotropic("omega1", AffineScalar::single(Theta::InvMu(0), Spatial::Const(1.0)), eta());
    let mut omega2 = SubdomainCoefficients::isotropic("omega2", AffineScalar::zero(), eta());
    omega2.diffusion = [
        AffineScalar::single(Theta::InvMu(0).times(&Theta::InvMu(1)), Spatial::Const(1.0)),
        AffineScalar::single(Theta::Mu(1).times(&Theta::InvMu(0)), Spatial::Const(1.0)),
    ];
    omega2.mass_scale = AffineScalar::single(Theta::Mu(1), Spatial::Const(1.0));
    omega2.tau_scale = AffineScalar::single(Theta::InvSqrtMu(1), Spatial::Const(1.0));
    CoefficientField {
        subdomains: vec![omega1, omega2],
        eta_norm: poiseuille(),
    }
}

pub fn graetz_observation(mesh: &TriangularMesh) -> RegionMask {
    mesh.mask_from_boxes(&[Rect::new(1.0, 2.0, 0.0, 0.2), Rect::new(1.0, 2.0, 0.8, 1.0)])
}

/// Geometrically parametrized Graetz problem on a mapped reference mesh.
pub fn assemble_graetz_transformed(mesh: TriangularMesh, settings: &ProblemSettings) -> Result<OcpDefinition> {
    let id = if settings.time.is_some() {
        ProblemId::GraetzParabolic
    } else {
        ProblemId::GraetzSteady
    };
    let obs = graetz_observation(&mesh);
    // Zero-valued segments first: shared corners take the value 1.
    let data = [
        ("gamma1", 0.0),
        ("gamma5", 0.0),
        ("gamma6", 0.0),
        ("gamma2", 1.0),
        ("gamma4", 1.0),
    ];
    finish(id, mesh, graetz_coefficients(), &data, obs, settings)
}

pub fn graetz(settings: &ProblemSettings) -> Result<OcpDefinition> {
    assemble_graetz_transformed(graetz_mesh(settings.h)?, settings)
}

/// Square mesh with `n` a multiple of 4 so that `y = 0.25`, `0.75` and
/// `x = 0.25` are grid lines.
pub fn square_mesh(h: f64) -> Result<TriangularMesh> {
    ensure_h(h)?;
    square_mesh_cells(round_up(crate::mesh::cells_for_h(1.0, h), 4))
}

pub fn square_mesh_cells(n: usize) -> Result<TriangularMesh> {
    let r = Rect::unit();
    let tags = TagScheme {
        segments: vec![
            BoundarySegment::new("gamma1", [0.0, 0.0], [0.0, 0.25]),
            BoundarySegment::new("gamma2", [0.0, 0.0], [1.0, 0.0]),
            BoundarySegment::new("gamma3", [1.0, 0.0], [1.0, 1.0]),
            BoundarySegment::new("gamma4", [1.0, 1.0], [0.0, 1.0]),
            BoundarySegment::new("gamma5", [0.0, 0.25], [0.0, 1.0]),
        ],
        subdomains: Vec::new(),
        default_subdomain: "omega".into(),
        required_x_lines: Vec::new(),
    };
    build_rect_mesh(r, n, n, &tags)
}

pub fn square_coefficients() -> CoefficientField {
    let field = SubdomainCoefficients::isotropic(
        "omega",
        AffineScalar::single(Theta::InvMu(0), Spatial::Const(1.0)),
        [
            AffineScalar::single(Theta::Cos(1), Spatial::Const(1.0)),
            AffineScalar::single(Theta::Sin(1), Spatial::Const(1.0)),
        ],
    );
    CoefficientField {
        subdomains: vec![field],
        eta_norm: Spatial::Const(1.0),
    }
}

pub fn square_from_mesh(mesh: TriangularMesh, settings: &ProblemSettings) -> Result<OcpDefinition> {
    let id = if settings.time.is_some() {
        ProblemId::SquareParabolic
    } else {
        ProblemId::SquareSteady
    };
    let obs = mesh.mask_from_boxes(&[Rect::new(0.25, 1.0, 0.75, 1.0)]);
    let data = [("gamma3", 0.0), ("gamma4", 0.0), ("gamma5", 0.0), ("gamma1", 1.0), ("gamma2", 1.0)];
    finish(id, mesh, square_coefficients(), &data, obs, settings)
}

pub fn square(settings: &ProblemSettings) -> Result<OcpDefinition> {
    square_from_mesh(square_mesh(settings.h)?, settings)
}

pub fn build_problem(id: ProblemId, settings: &ProblemSettings) -> Result<OcpDefinition> {
    if id.is_parabolic() != settings.time.is_some() {
        return Err(Error::config("time", format!("{id} needs a time grid iff it is parabolic")));
    }
    if id.is_graetz() {
        graetz(settings)
    } else {
        square(settings)
    }
}
