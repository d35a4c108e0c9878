//! Structured triangulations of axis-aligned rectangles.
//!
//! Every cell of an `nx × ny` grid is split along its (i,j)–(i+1,j+1)
//! diagonal. Boundary edges are labelled by which closed boundary segment
//! contains their midpoint; triangles are labelled by which subdomain box
//! contains their barycenter.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GEOM_TOL: f64 = 1e-12;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed containment with the geometric tolerance.
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 - GEOM_TOL
            && p[0] <= self.x1 + GEOM_TOL
            && p[1] >= self.y0 - GEOM_TOL
            && p[1] <= self.y1 + GEOM_TOL
    }
}

/// A closed, axis-aligned piece of the rectangle boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySegment {
    pub label: String,
    pub from: Point,
    pub to: Point,
}

impl BoundarySegment {
    pub fn new(label: &str, from: Point, to: Point) -> Self {
        Self {
            label: label.to_string(),
            from,
            to,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let lo = [self.from[0].min(self.to[0]), self.from[1].min(self.to[1])];
        let hi = [self.from[0].max(self.to[0]), self.from[1].max(self.to[1])];
        Rect::new(lo[0], hi[0], lo[1], hi[1]).contains(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainBox {
    pub label: String,
    pub region: Rect,
}

/// Labelling scheme applied by [`build_rect_mesh`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagScheme {
    pub segments: Vec<BoundarySegment>,
    /// Checked in order; triangles matching none get `default_subdomain`.
    pub subdomains: Vec<SubdomainBox>,
    pub default_subdomain: String,
    /// Vertical lines that must coincide with grid lines.
    pub required_x_lines: Vec<f64>,
}

impl TagScheme {
    /// Four sides labelled `bottom`, `right`, `top`, `left`; one subdomain.
    pub fn sides(rect: Rect) -> Self {
        let (a, b, c, d) = ([rect.x0, rect.y0], [rect.x1, rect.y0], [rect.x1, rect.y1], [rect.x0, rect.y1]);
        Self {
            segments: vec![
                BoundarySegment::new("bottom", a, b),
                BoundarySegment::new("right", b, c),
                BoundarySegment::new("top", c, d),
                BoundarySegment::new("left", d, a),
            ],
            subdomains: Vec::new(),
            default_subdomain: "omega".into(),
            required_x_lines: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: usize,
}

#[derive(Debug, Clone)]
pub struct TriangularMesh {
    rect: Rect,
    nx: usize,
    ny: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    boundary_labels: Vec<String>,
    subdomain: Vec<usize>,
    subdomain_labels: Vec<String>,
    h_k: Vec<f64>,
    h: f64,
}

/// Set of triangle indices, e.g. an observation region or a subdomain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    inside: Vec<bool>,
}

impl RegionMask {
    pub fn all(n_triangles: usize) -> Self {
        Self {
            inside: vec![true; n_triangles],
        }
    }

    pub fn none(n_triangles: usize) -> Self {
        Self {
            inside: vec![false; n_triangles],
        }
    }

    pub fn from_fn(n_triangles: usize, f: impl Fn(usize) -> bool) -> Self {
        Self {
            inside: (0..n_triangles).map(f).collect(),
        }
    }

    #[inline]
    pub fn contains(&self, k: usize) -> bool {
        self.inside[k]
    }

    pub fn len(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_triangles(&self) -> usize {
        self.inside.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.inside.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k)
    }

    pub fn union(&self, other: &RegionMask) -> RegionMask {
        RegionMask {
            inside: self.inside.iter().zip(&other.inside).map(|(a, b)| *a || *b).collect(),
        }
    }
}

pub fn build_rect_mesh(rect: Rect, nx: usize, ny: usize, tags: &TagScheme) -> Result<TriangularMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidGeometry(format!("cell counts must be positive, got {nx}x{ny}")));
    }
    if !(rect.width() > 0.0 && rect.height() > 0.0) || !rect.width().is_finite() || !rect.height().is_finite() {
        return Err(Error::InvalidGeometry(format!("degenerate rectangle {rect:?}")));
    }
    let dx = rect.width() / nx as f64;
    let dy = rect.height() / ny as f64;
    for &xl in &tags.required_x_lines {
        let s = (xl - rect.x0) / dx;
        if (s - s.round()).abs() > 1e-9 {
            return Err(Error::InvalidGeometry(format!(
                "x = {xl} is not a grid line for nx = {nx}; choose nx so that it is"
            )));
        }
    }

    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * dx };
            let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * dy };
            vertices.push([x, y]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut boundary_labels = Vec::new();
    for s in &tags.segments {
        if !label_index.contains_key(&s.label) {
            label_index.insert(s.label.clone(), boundary_labels.len());
            boundary_labels.push(s.label.clone());
        }
    }

    let mut raw_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        raw_edges.push([vid(i, 0), vid(i + 1, 0)]);
        raw_edges.push([vid(i + 1, ny), vid(i, ny)]);
    }
    for j in 0..ny {
        raw_edges.push([vid(nx, j), vid(nx, j + 1)]);
        raw_edges.push([vid(0, j + 1), vid(0, j)]);
    }
    let mut boundary_edges = Vec::with_capacity(raw_edges.len());
    for e in raw_edges {
        let (a, b) = (vertices[e[0]], vertices[e[1]]);
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let hits: Vec<&BoundarySegment> = tags.segments.iter().filter(|s| s.contains(mid)).collect();
        let distinct: Vec<&str> = {
            let mut v: Vec<&str> = hits.iter().map(|s| s.label.as_str()).collect();
            v.dedup();
            v
        };
        match distinct.as_slice() {
            [one] => boundary_edges.push(BoundaryEdge {
                vertices: e,
                tag: label_index[*one],
            }),
            [] => {
                return Err(Error::InvalidGeometry(format!(
                    "boundary edge with midpoint ({:.6}, {:.6}) is not covered by any segment",
                    mid[0], mid[1]
                )))
            }
            many => {
                return Err(Error::InvalidGeometry(format!(
                    "boundary edge with midpoint ({:.6}, {:.6}) lies on several segments: {many:?}",
                    mid[0], mid[1]
                )))
            }
        }
    }

    let mut subdomain_labels = vec![tags.default_subdomain.clone()];
    for s in &tags.subdomains {
        if !subdomain_labels.contains(&s.label) {
            subdomain_labels.push(s.label.clone());
        }
    }
    let sub_index = |label: &str| subdomain_labels.iter().position(|l| l == label).unwrap();

    let mut subdomain = Vec::with_capacity(triangles.len());
    let mut h_k = Vec::with_capacity(triangles.len());
    for t in &triangles {
        let p = t.map(|v| vertices[v]);
        let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        let label = tags
            .subdomains
            .iter()
            .find(|s| s.region.contains(c))
            .map(|s| s.label.as_str())
            .unwrap_or(&tags.default_subdomain);
        subdomain.push(sub_index(label));
        h_k.push(diameter(&p));
    }
    let h = h_k.iter().cloned().fold(0.0, f64::max);

    Ok(TriangularMesh {
        rect,
        nx,
        ny,
        vertices,
        triangles,
        boundary_edges,
        boundary_labels,
        subdomain,
        subdomain_labels,
        h_k,
        h,
    })
}

fn diameter(p: &[Point; 3]) -> f64 {
    let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(p[0], p[1]).max(d(p[1], p[2])).max(d(p[2], p[0]))
}

impl TriangularMesh {
    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn boundary_labels(&self) -> &[String] {
        &self.boundary_labels
    }

    pub fn subdomain_labels(&self) -> &[String] {
        &self.subdomain_labels
    }

    pub fn subdomain_of(&self, k: usize) -> usize {
        self.subdomain[k]
    }

    pub fn subdomain_label_of(&self, k: usize) -> &str {
        &self.subdomain_labels[self.subdomain[k]]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn h_k(&self) -> &[f64] {
        &self.h_k
    }

    pub fn coords(&self, k: usize) -> [Point; 3] {
        self.triangles[k].map(|v| self.vertices[v])
    }

    pub fn signed_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.coords(k);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn barycenter(&self, k: usize) -> Point {
        let [a, b, c] = self.coords(k);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Triangles tagged with the given subdomain label.
    pub fn subdomain_mask(&self, label: &str) -> Result<RegionMask> {
        let idx = self
            .subdomain_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::InvalidGeometry(format!("unknown subdomain label `{label}`")))?;
        Ok(RegionMask::from_fn(self.n_triangles(), |k| self.subdomain[k] == idx))
    }

    /// Triangles whose barycenter lies in any of the given boxes.
    pub fn mask_from_boxes(&self, boxes: &[Rect]) -> RegionMask {
        RegionMask::from_fn(self.n_triangles(), |k| {
            let c = self.barycenter(k);
            boxes.iter().any(|b| b.contains(c))
        })
    }

    /// Vertices touched by any boundary edge carrying `label`.
    pub fn boundary_vertices(&self, label: &str) -> Vec<usize> {
        let Some(tag) = self.boundary_labels.iter().position(|l| l == label) else {
            return Vec::new();
        };
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.vertices)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Plain-text dump, one record per line.
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# vertices {}", self.n_vertices())?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "v {i} {:.17e} {:.17e}", p[0], p[1])?;
        }
        writeln!(w, "# triangles {}", self.n_triangles())?;
        for (k, t) in self.triangles.iter().enumerate() {
            writeln!(w, "t {k} {} {} {} {}", t[0], t[1], t[2], self.subdomain_label_of(k))?;
        }
        writeln!(w, "# boundary_edges {}", self.boundary_edges.len())?;
        for e in &self.boundary_edges {
            writeln!(w, "e {} {} {}", e.vertices[0], e.vertices[1], self.boundary_labels[e.tag])?;
        }
        Ok(())
    }
}

/// Cells per unit length giving a structured mesh with diameter at most `h`
/// on square cells.
pub fn cells_for_h(length: f64, h: f64) -> usize {
    ((std::f64::consts::SQRT_2 * length / h) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone)]
pub struct PecletField {
    pub values: Vec<f64>,
    pub advection_dominated: bool,
}

/// Local Péclet numbers `|η| h_K / (2γ)` at triangle barycenters.
///
/// `gamma` receives the barycenter and the triangle's subdomain label.
pub fn peclet_field(
    mesh: &TriangularMesh,
    gamma: impl Fn(Point, &str) -> f64,
    eta: impl Fn(Point) -> [f64; 2],
) -> Result<PecletField> {
    let mut values = Vec::with_capacity(mesh.n_triangles());
    for k in 0..mesh.n_triangles() {
        let c = mesh.barycenter(k);
        let g = gamma(c, mesh.subdomain_label_of(k));
        if !(g > 0.0) {
            return Err(Error::InvalidCoefficient(format!(
                "diffusion coefficient {g} is not positive on triangle {k}"
            )));
        }
        let e = eta(c);
        values.push(e[0].hypot(e[1]) * mesh.h_k[k] / (2.0 * g));
    }
    let advection_dominated = values.iter().all(|&p| p > 1.0);
    Ok(PecletField {
        values,
        advection_dominated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn unit(nx: usize, ny: usize) -> TriangularMesh {
        build_rect_mesh(Rect::unit(), nx, ny, &TagScheme::sides(Rect::unit())).unwrap()
    }

    #[test]
    fn single_cell() {
        let m = unit(1, 1);
        assert_eq!(m.n_triangles(), 2);
        assert_relative_eq!(m.h(), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn interior_edges_shared_twice() {
        let m = unit(2, 2);
        assert_eq!(m.n_triangles(), 8);
        let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in m.triangles() {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let boundary: std::collections::BTreeSet<(usize, usize)> = m
            .boundary_edges()
            .iter()
            .map(|e| (e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1])))
            .collect();
        assert_eq!(boundary.len(), 8);
        for (e, c) in count {
            if boundary.contains(&e) {
                assert_eq!(c, 1);
            } else {
                assert_eq!(c, 2, "edge {e:?}");
            }
        }
    }

    #[test]
    fn degenerate_rect_rejected() {
        let r = Rect::new(0.0, 0.0, 0.0, 1.0);
        assert!(matches!(build_rect_mesh(r, 2, 2, &TagScheme::sides(r)), Err(Error::InvalidGeometry(_))));
        assert!(build_rect_mesh(Rect::unit(), 0, 2, &TagScheme::sides(Rect::unit())).is_err());
    }

    #[test]
    fn required_line_enforced() {
        let r = Rect::new(0.0, 2.0, 0.0, 1.0);
        let mut tags = TagScheme::sides(r);
        tags.required_x_lines.push(1.0);
        assert!(build_rect_mesh(r, 3, 2, &tags).is_err());
        assert!(build_rect_mesh(r, 4, 2, &tags).is_ok());
    }

    #[test]
    fn uncovered_boundary_rejected() {
        let mut tags = TagScheme::sides(Rect::unit());
        tags.segments.pop();
        assert!(build_rect_mesh(Rect::unit(), 2, 2, &tags).is_err());
    }

    #[test]
    fn peclet_examples() {
        let m = unit(4, 4);
        let pe = peclet_field(&m, |_, _| 0.05, |_| [1.0, 0.0]).unwrap();
        let hk = m.h_k()[0];
        assert_relative_eq!(pe.values[0], hk / 0.1, epsilon = 1e-14);
        // direct arithmetic cases
        let f = |eta: f64, h: f64, g: f64| eta * h / (2.0 * g);
        assert_relative_eq!(f(1.0, 0.025, 1.0 / 4e4), 500.0, epsilon = 1e-9);
        assert_relative_eq!(f(1.0, 0.1, 0.05), 1.0, epsilon = 1e-14);
        assert_relative_eq!(f(4.0 * 0.5 * 0.5, 0.034, 1e-5), 1700.0, epsilon = 1e-9);
        assert!(peclet_field(&m, |_, _| 0.0, |_| [1.0, 0.0]).is_err());
    }

    #[test]
    fn peclet_dominance_flag() {
        let m = unit(10, 10);
        let pe = peclet_field(&m, |_, _| 1e-4, |_| [1.0, 0.0]).unwrap();
        assert!(pe.advection_dominated);
        let pe = peclet_field(&m, |_, _| 1.0, |_| [1.0, 0.0]).unwrap();
        assert!(!pe.advection_dominated);
    }

    #[test]
    fn dump_has_one_line_per_record() {
        let m = unit(2, 1);
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3 + m.n_vertices() + m.n_triangles() + m.boundary_edges().len());
    }

    proptest! {
        #[test]
        fn structural_invariants(nx in 1usize..12, ny in 1usize..12, w in 0.1f64..5.0, hgt in 0.1f64..5.0, x0 in -3.0f64..3.0) {
            let r = Rect::new(x0, x0 + w, 0.0, hgt);
            let m = build_rect_mesh(r, nx, ny, &TagScheme::sides(r)).unwrap();
            prop_assert_eq!(m.n_triangles(), 2 * nx * ny);
            let total: f64 = (0..m.n_triangles()).map(|k| m.signed_area(k)).sum();
            prop_assert!((total - r.area()).abs() <= 1e-12 * r.area());
            for k in 0..m.n_triangles() {
                prop_assert!(m.signed_area(k) > 0.0);
                prop_assert!(m.h_k()[k] <= m.h());
            }
            let hmin = m.h_k().iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(m.h() / hmin <= 2.0);
            prop_assert_eq!(m.boundary_edges().len(), 2 * (nx + ny));
        }

        #[test]
        fn peclet_scaling(g in 1e-4f64..10.0, e in 0.1f64..10.0, s in 0.1f64..10.0) {
            let m = unit(3, 3);
            let base = peclet_field(&m, |_, _| g, |_| [e, 0.0]).unwrap();
            let sg = peclet_field(&m, |_, _| s * g, |_| [e, 0.0]).unwrap();
            let se = peclet_field(&m, |_, _| g, |_| [0.0, s * e]).unwrap();
            for k in 0..m.n_triangles() {
                prop_assert!((sg.values[k] * s - base.values[k]).abs() <= 1e-12 * base.values[k]);
                prop_assert!((se.values[k] - s * base.values[k]).abs() <= 1e-12 * se.values[k]);
            }
        }
    }
}
