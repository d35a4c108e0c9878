//! P1 finite elements with SUPG stabilization.

pub mod affine;
pub mod dirichlet;
pub mod element;
pub mod forms;

pub use affine::{AffineOperator, AffineScalar, AffineTerm, AffineVector, Mode, Spatial, Theta};
pub use dirichlet::{apply_dirichlet, DirichletHandler, LiftedRhs};
pub use forms::{
    assemble_adjoint_forms, assemble_forms, assemble_state_forms, split_operator, stabilization_weights,
    uniform_delta, AdjointForms, AffineForms, CoefficientField, StateForms, SubdomainCoefficients,
};
