//! P1 element kernels on triangles.

use crate::fem::affine::Spatial;
use crate::mesh::{Point, TriangularMesh};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Symmetric 6-point rule exact for polynomials of degree 4, in barycentric
/// coordinates; weights sum to one.
pub const TRI_QUAD: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.445948490915965;
    const B1: f64 = 0.108103018168070;
    const W1: f64 = 0.223381589678011;
    const A2: f64 = 0.091576213509771;
    const B2: f64 = 0.816847572980459;
    const W2: f64 = 0.109951743655322;
    [
        ([A1, A1, B1], W1),
        ([A1, B1, A1], W1),
        ([B1, A1, A1], W1),
        ([A2, A2, B2], W2),
        ([A2, B2, A2], W2),
        ([B2, A2, A2], W2),
    ]
};

/// Value or first derivative of a P1 shape function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Val,
    Dx,
    Dy,
}

impl Op {
    pub fn grad(axis: usize) -> Op {
        if axis == 0 {
            Op::Dx
        } else {
            Op::Dy
        }
    }
}

/// Geometry of one P1 triangle.
#[derive(Debug, Clone, Copy)]
pub struct P1Element {
    pub coords: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric shape functions.
    pub grads: [[f64; 2]; 3],
}

impl P1Element {
    pub fn new(coords: [Point; 3]) -> Self {
        let [a, b, c] = coords;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let grads = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        Self {
            coords,
            area: 0.5 * det.abs(),
            grads,
        }
    }

    pub fn point(&self, lambda: [f64; 3]) -> Point {
        let [a, b, c] = self.coords;
        [
            lambda[0] * a[0] + lambda[1] * b[0] + lambda[2] * c[0],
            lambda[0] * a[1] + lambda[1] * b[1] + lambda[2] * c[1],
        ]
    }

    #[inline]
    pub fn shape(&self, op: Op, i: usize, lambda: [f64; 3]) -> f64 {
        match op {
            Op::Val => lambda[i],
            Op::Dx => self.grads[i][0],
            Op::Dy => self.grads[i][1],
        }
    }

    /// `∫_K g · (trial op φ_j) · (test op φ_i)`, indexed `[i][j]`.
    pub fn bilinear(&self, g: &Spatial, trial: Op, test: Op) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (lambda, w) in TRI_QUAD {
            let gw = g.eval(self.point(lambda)) * w * self.area;
            if gw == 0.0 {
                continue;
            }
            for (i, row) in out.iter_mut().enumerate() {
                let ti = self.shape(test, i, lambda);
                for (j, e) in row.iter_mut().enumerate() {
                    *e += gw * ti * self.shape(trial, j, lambda);
                }
            }
        }
        if trial == test {
            // Mirror so that symmetric forms are bitwise symmetric.
            for i in 0..3 {
                for j in 0..i {
                    out[i][j] = out[j][i];
                }
            }
        }
        out
    }

    /// `∫_K g · (test op φ_i)`.
    pub fn linear(&self, g: &Spatial, test: Op) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (lambda, w) in TRI_QUAD {
            let gw = g.eval(self.point(lambda)) * w * self.area;
            for (i, e) in out.iter_mut().enumerate() {
                *e += gw * self.shape(test, i, lambda);
            }
        }
        out
    }
}

/// Global matrix of `Σ_K c_K ∫_K g (trial op φ_j)(test op φ_i)` over the
/// triangles for which `weight` returns a nonzero factor.
pub fn assemble_bilinear(
    mesh: &TriangularMesh,
    weight: impl Fn(usize) -> f64,
    g: &Spatial,
    trial: Op,
    test: Op,
) -> CsrMatrix {
    let n = mesh.n_vertices();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.n_triangles());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let c = weight(k);
        if c == 0.0 {
            continue;
        }
        let el = P1Element::new(mesh.coords(k));
        let local = el.bilinear(g, trial, test);
        for i in 0..3 {
            for j in 0..3 {
                if local[i][j] != 0.0 {
                    b.push(tri[i], tri[j], c * local[i][j]);
                }
            }
        }
    }
    b.build()
}

pub fn assemble_linear(mesh: &TriangularMesh, weight: impl Fn(usize) -> f64, g: &Spatial, test: Op) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_vertices()];
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let c = weight(k);
        if c == 0.0 {
            continue;
        }
        let local = P1Element::new(mesh.coords(k)).linear(g, test);
        for i in 0..3 {
            out[tri[i]] += c * local[i];
        }
    }
    out
}

/// Unweighted P1 mass matrix.
pub fn mass_matrix(mesh: &TriangularMesh) -> CsrMatrix {
    assemble_bilinear(mesh, |_| 1.0, &Spatial::Const(1.0), Op::Val, Op::Val)
}

/// Unweighted P1 Laplacian stiffness matrix.
pub fn stiffness_matrix(mesh: &TriangularMesh) -> CsrMatrix {
    let one = Spatial::Const(1.0);
    let kx = assemble_bilinear(mesh, |_| 1.0, &one, Op::Dx, Op::Dx);
    let ky = assemble_bilinear(mesh, |_| 1.0, &one, Op::Dy, Op::Dy);
    kx.lin_comb(1.0, &ky, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Exact ∫ over the reference triangle of x^p y^q = p! q! / (p+q+2)!.
    fn monomial_ref(p: u32, q: u32) -> f64 {
        let f = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        f(p) * f(q) / f(p + q + 2)
    }

    #[test]
    fn quadrature_degree_four() {
        let el = P1Element::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        for p in 0..=4u32 {
            for q in 0..=(4 - p) {
                let g = Spatial::func(move |x| x[0].powi(p as i32) * x[1].powi(q as i32));
                let v = el.linear(&g, Op::Val).iter().sum::<f64>();
                assert_relative_eq!(v, monomial_ref(p, q), epsilon = 1e-14);
            }
        }
        let w: f64 = TRI_QUAD.iter().map(|q| q.1).sum();
        assert_relative_eq!(w, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn reference_mass_matrix() {
        let el = P1Element::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let m = el.bilinear(&Spatial::Const(1.0), Op::Val, Op::Val);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
                assert_relative_eq!(m[i][j], e, epsilon = 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn gradients_reproduce_linears(ax in -3.0f64..3.0, ay in -3.0f64..3.0, bx in -3.0f64..3.0, by in -3.0f64..3.0, cx in -3.0f64..3.0, cy in -3.0f64..3.0) {
            let el = P1Element::new([[ax, ay], [bx, by], [cx, cy]]);
            prop_assume!(el.area > 1e-3);
            // Σ φ_i = 1 so gradients sum to zero; Σ x_i ∇φ_i = (1, 0).
            let sx: f64 = (0..3).map(|i| el.grads[i][0]).sum();
            let gx: f64 = (0..3).map(|i| el.coords[i][0] * el.grads[i][0]).sum();
            let gy: f64 = (0..3).map(|i| el.coords[i][0] * el.grads[i][1]).sum();
            prop_assert!(sx.abs() < 1e-9);
            prop_assert!((gx - 1.0).abs() < 1e-9);
            prop_assert!(gy.abs() < 1e-9);
        }
    }
}
