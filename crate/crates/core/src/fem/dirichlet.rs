use crate::error::{Error, Result};
use crate::fem::affine::AffineVector;
use crate::fem::forms::AffineForms;
use crate::mesh::TriangularMesh;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Dirichlet nodes and the nodal lifting of the boundary data.
///
/// The state is solved for `ȳ = y − R_y`, which vanishes on constrained
/// nodes; the adjoint vanishes there too. The control is unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletHandler {
    constrained: Vec<bool>,
    lifting: Vec<f64>,
}

/// Right-hand sides after lifting: `F_s − K_s R_y` and `M_obs,s (y_d − R_y)`.
#[derive(Debug, Clone)]
pub struct LiftedRhs {
    pub state: AffineVector,
    pub adjoint: AffineVector,
}

impl DirichletHandler {
    /// `data` lists `(segment label, value)`; a vertex shared by several
    /// Dirichlet segments takes the value of the last one listed.
    pub fn new(mesh: &TriangularMesh, data: &[(&str, f64)]) -> Result<Self> {
        let n = mesh.n_vertices();
        let mut constrained = vec![false; n];
        let mut lifting = vec![0.0; n];
        for (label, value) in data {
            if !mesh.boundary_labels().iter().any(|l| l == label) {
                return Err(Error::Assembly(format!(
                    "Dirichlet segment `{label}` is not a boundary tag of the mesh (tags: {:?})",
                    mesh.boundary_labels()
                )));
            }
            for v in mesh.boundary_vertices(label) {
                constrained[v] = true;
                lifting[v] = *value;
            }
        }
        Ok(Self { constrained, lifting })
    }

    pub fn none(n: usize) -> Self {
        Self {
            constrained: vec![false; n],
            lifting: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.constrained.len()
    }

    #[inline]
    pub fn is_constrained(&self, i: usize) -> bool {
        self.constrained[i]
    }

    pub fn constrained_mask(&self) -> &[bool] {
        &self.constrained
    }

    pub fn n_constrained(&self) -> usize {
        self.constrained.iter().filter(|&&c| c).count()
    }

    pub fn lifting(&self) -> &[f64] {
        &self.lifting
    }

    pub fn zero_constrained(&self, v: &mut [f64]) {
        for (x, &c) in v.iter_mut().zip(&self.constrained) {
            if c {
                *x = 0.0;
            }
        }
    }

    /// `y = ȳ + R_y`
    pub fn lift(&self, ybar: &[f64]) -> Vec<f64> {
        ybar.iter().zip(&self.lifting).map(|(a, b)| a + b).collect()
    }

    /// Square matrix with constrained rows and columns replaced by identity.
    pub fn eliminate(&self, a: &CsrMatrix) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(a.nrows(), a.ncols(), a.nnz());
        for (i, j, v) in a.iter() {
            if !self.constrained[i] && !self.constrained[j] {
                b.push(i, j, v);
            }
        }
        for (i, &c) in self.constrained.iter().enumerate() {
            if c {
                b.push(i, i, 1.0);
            }
        }
        b.build()
    }
}

/// Lifted right-hand sides of the homogenized optimality system.
pub fn apply_dirichlet(forms: &AffineForms, handler: &DirichletHandler) -> Result<LiftedRhs> {
    if handler.n() != forms.n {
        return Err(Error::Assembly(format!(
            "Dirichlet handler has {} nodes, forms have {}",
            handler.n(),
            forms.n
        )));
    }
    let r = handler.lifting();
    let mut state = forms.forcing.clone();
    state.extend(AffineVector::from_operator_action(&forms.stiffness, r, -1.0));
    let mut adjoint = forms.observation_rhs.clone();
    adjoint.extend(AffineVector::from_operator_action(&forms.observation, r, -1.0));
    let mut out = LiftedRhs { state, adjoint };
    for t in out.state.terms.iter_mut().chain(out.adjoint.terms.iter_mut()) {
        handler.zero_constrained(&mut t.vector);
    }
    out.state.terms.retain(|t| t.vector.iter().any(|&v| v != 0.0));
    out.adjoint.terms.retain(|t| t.vector.iter().any(|&v| v != 0.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::element::stiffness_matrix;
    use crate::mesh::{build_rect_mesh, Rect, TagScheme};
    use crate::sparse::SparseLu;

    #[test]
    fn constant_boundary_data_gives_constant_harmonic_state() {
        let r = Rect::unit();
        let mesh = build_rect_mesh(r, 6, 6, &TagScheme::sides(r)).unwrap();
        let h = DirichletHandler::new(&mesh, &[("bottom", 1.0), ("right", 1.0), ("top", 1.0), ("left", 1.0)]).unwrap();
        let k = stiffness_matrix(&mesh);
        let mut rhs = k.matvec(h.lifting());
        rhs.iter_mut().for_each(|v| *v = -*v);
        h.zero_constrained(&mut rhs);
        let ybar = SparseLu::factor(&h.eliminate(&k)).unwrap().solve(&rhs).unwrap();
        for v in h.lift(&ybar) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_data_has_zero_lifting_and_last_segment_wins() {
        let r = Rect::unit();
        let mesh = build_rect_mesh(r, 3, 3, &TagScheme::sides(r)).unwrap();
        let h = DirichletHandler::new(&mesh, &[("left", 0.0)]).unwrap();
        assert!(h.lifting().iter().all(|&v| v == 0.0));
        assert_eq!(h.n_constrained(), 4);
        let h = DirichletHandler::new(&mesh, &[("left", 0.0), ("bottom", 1.0)]).unwrap();
        assert_eq!(h.lifting()[0], 1.0);
        assert!(DirichletHandler::new(&mesh, &[("nowhere", 1.0)]).is_err());
    }
}
