//! Conforming affine 2D meshes (triangles and axis-aligned rectangles) of the
//! benchmark domains, with facet connectivity and element region tags.
//!
//! Conventions:
//! - Element vertices are listed counterclockwise, so every Jacobian
//!   determinant is positive.
//! - Local edge `i` of an element connects local vertices `i` and `i+1`
//!   (cyclically); its outward normal is the edge direction rotated by −90°.
//! - A facet stores its vertex pair sorted ascending; the facet's unit normal
//!   points out of the owner element (owner → neighbor).  The facet's intrinsic
//!   parameterization runs from the lower to the higher global vertex index.

use crate::{Error, Result};
use std::collections::HashMap;

/// Element shape of a (homogeneous) mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Triangle,
    Rectangle,
}

impl ElementKind {
    /// Number of vertices (= number of edges) per element.
    pub fn num_vertices(self) -> usize {
        match self {
            ElementKind::Triangle => 3,
            ElementKind::Rectangle => 4,
        }
    }
}

/// A single element: vertex indices (counterclockwise) and a region tag.
#[derive(Debug, Clone)]
pub struct Element {
    pub vertices: Vec<usize>,
    pub region: i32,
}

/// A mesh facet (edge in 2D).
#[derive(Debug, Clone)]
pub struct Facet {
    /// Global vertex indices, sorted ascending.
    pub vertices: [usize; 2],
    /// Element owning the facet (first element that referenced it).
    pub owner: usize,
    /// Neighboring element, absent on the boundary.
    pub neighbor: Option<usize>,
    /// Unit normal pointing out of the owner element.
    pub normal: [f64; 2],
    /// Facet length.
    pub length: f64,
    /// 0 for interior facets; generator-specific positive marker on the boundary.
    pub boundary_marker: i32,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }
}

/// Reference of an element's local edge into the global facet table.
#[derive(Debug, Clone, Copy)]
pub struct FacetRef {
    pub facet: usize,
    /// True when the local edge direction (local vertex i → i+1) is opposite
    /// to the facet's intrinsic lower→higher vertex direction.
    pub flip: bool,
}

/// Conforming 2D mesh with facet connectivity.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub kind: ElementKind,
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
    pub facets: Vec<Facet>,
    /// Per element, one entry per local edge.
    pub elem_facets: Vec<Vec<FacetRef>>,
}

impl Mesh {
    /// Assemble a mesh from raw vertices/elements, building the facet table.
    ///
    /// `boundary_marker` receives the midpoint of each boundary facet.
    pub fn from_elements(
        kind: ElementKind,
        vertices: Vec<[f64; 2]>,
        elements: Vec<Element>,
        boundary_marker: impl Fn(&[f64; 2]) -> i32,
    ) -> Result<Self> {
        let nloc = kind.num_vertices();
        let mut facets: Vec<Facet> = Vec::new();
        let mut elem_facets: Vec<Vec<FacetRef>> = Vec::with_capacity(elements.len());
        let mut table: HashMap<(usize, usize), usize> = HashMap::new();

        for (e, el) in elements.iter().enumerate() {
            if el.vertices.len() != nloc {
                return Err(Error::InvalidArgument(format!(
                    "element {e} has {} vertices, expected {nloc}",
                    el.vertices.len()
                )));
            }
            let mut refs = Vec::with_capacity(nloc);
            for i in 0..nloc {
                let a = el.vertices[i];
                let b = el.vertices[(i + 1) % nloc];
                if a == b || a >= vertices.len() || b >= vertices.len() {
                    return Err(Error::InvalidArgument(format!(
                        "element {e} has an invalid edge ({a},{b})"
                    )));
                }
                let key = (a.min(b), a.max(b));
                let flip = a > b;
                match table.get(&key) {
                    None => {
                        let pa = vertices[a];
                        let pb = vertices[b];
                        let d = [pb[0] - pa[0], pb[1] - pa[1]];
                        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                        // Outward normal of a CCW element: rotate edge by -90 deg.
                        let normal = [d[1] / len, -d[0] / len];
                        let id = facets.len();
                        facets.push(Facet {
                            vertices: [key.0, key.1],
                            owner: e,
                            neighbor: None,
                            normal,
                            length: len,
                            boundary_marker: 0,
                        });
                        table.insert(key, id);
                        refs.push(FacetRef { facet: id, flip });
                    }
                    Some(&id) => {
                        let f = &mut facets[id];
                        if f.neighbor.is_some() {
                            return Err(Error::InvalidArgument(format!(
                                "facet ({},{}) referenced by more than two elements",
                                key.0, key.1
                            )));
                        }
                        f.neighbor = Some(e);
                        refs.push(FacetRef { facet: id, flip });
                    }
                }
            }
            elem_facets.push(refs);
        }

        for f in facets.iter_mut() {
            if f.neighbor.is_none() {
                let pa = vertices[f.vertices[0]];
                let pb = vertices[f.vertices[1]];
                let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                f.boundary_marker = boundary_marker(&mid);
            }
        }

        let mesh = Mesh {
            kind,
            vertices,
            elements,
            facets,
            elem_facets,
        };
        for e in 0..mesh.elements.len() {
            let map = mesh.affine_map(e);
            if map.det <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "element {e} has nonpositive Jacobian determinant {}",
                    map.det
                )));
            }
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    /// Affine map from the reference element onto element `e`.
    pub fn affine_map(&self, e: usize) -> AffineMap {
        let v = &self.elements[e].vertices;
        let p0 = self.vertices[v[0]];
        let (c0, c1) = match self.kind {
            ElementKind::Triangle => (self.vertices[v[1]], self.vertices[v[2]]),
            ElementKind::Rectangle => (self.vertices[v[1]], self.vertices[v[3]]),
        };
        AffineMap::new(
            p0,
            [
                [c0[0] - p0[0], c1[0] - p0[0]],
                [c0[1] - p0[1], c1[1] - p0[1]],
            ],
        )
    }

    /// Area of element `e` (reference measure times Jacobian determinant).
    pub fn element_area(&self, e: usize) -> f64 {
        let ref_measure = match self.kind {
            ElementKind::Triangle => 0.5,
            ElementKind::Rectangle => 1.0,
        };
        self.affine_map(e).det * ref_measure
    }

    /// Diameter of element `e` (largest vertex-pair distance).
    pub fn element_diameter(&self, e: usize) -> f64 {
        let v = &self.elements[e].vertices;
        let mut d = 0.0_f64;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                let a = self.vertices[v[i]];
                let b = self.vertices[v[j]];
                d = d.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        d
    }

    /// Mesh size h = max element diameter.
    pub fn h(&self) -> f64 {
        (0..self.num_elements())
            .map(|e| self.element_diameter(e))
            .fold(0.0, f64::max)
    }

    /// Centroid of element `e`.
    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        let v = &self.elements[e].vertices;
        let mut c = [0.0, 0.0];
        for &i in v {
            c[0] += self.vertices[i][0];
            c[1] += self.vertices[i][1];
        }
        [c[0] / v.len() as f64, c[1] / v.len() as f64]
    }

    /// Total mesh area.
    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.element_area(e)).sum()
    }

    /// Outward unit normal of element `e` on its local edge `i`.
    pub fn outward_normal(&self, e: usize, i: usize) -> [f64; 2] {
        let fr = self.elem_facets[e][i];
        let f = &self.facets[fr.facet];
        if f.owner == e {
            f.normal
        } else {
            [-f.normal[0], -f.normal[1]]
        }
    }
}

/// Affine map x = b + F x̂ from the reference element.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub origin: [f64; 2],
    /// Jacobian F (columns are the mapped reference axes).
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub inv: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn new(origin: [f64; 2], jac: [[f64; 2]; 2]) -> Self {
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        AffineMap {
            origin,
            jac,
            det,
            inv,
        }
    }

    /// Map a reference point to the physical element.
    pub fn apply(&self, xhat: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xhat[0] + self.jac[0][1] * xhat[1],
            self.origin[1] + self.jac[1][0] * xhat[0] + self.jac[1][1] * xhat[1],
        ]
    }

    /// Map a physical point back to reference coordinates.
    pub fn apply_inv(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }
}

/// Structured triangulation of the square (lo,hi)² with n×n cells, each split
/// along the same diagonal. Mesh size h = √2·(hi−lo)/n.
pub fn square_triangles(n: usize, lo: f64, hi: f64) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let (vertices, vid) = grid_vertices(n, lo, hi);
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            elements.push(Element {
                vertices: vec![v00, v10, v11],
                region: 0,
            });
            elements.push(Element {
                vertices: vec![v00, v11, v01],
                region: 0,
            });
        }
    }
    Mesh::from_elements(ElementKind::Triangle, vertices, elements, |_| 1)
}

/// Structured triangulation of the unit square; 2n² triangles, h = √2/n.
pub fn unit_square_triangles(n: usize) -> Result<Mesh> {
    square_triangles(n, 0.0, 1.0)
}

/// Structured n×n rectangle mesh of the unit square.
pub fn unit_square_rectangles(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let (vertices, vid) = grid_vertices(n, 0.0, 1.0);
    let mut elements = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            elements.push(Element {
                vertices: vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)],
                region: 0,
            });
        }
    }
    Mesh::from_elements(ElementKind::Rectangle, vertices, elements, |_| 1)
}

fn grid_vertices(n: usize, lo: f64, hi: f64) -> (Vec<[f64; 2]>, impl Fn(usize, usize) -> usize) {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let y = lo + (hi - lo) * j as f64 / n as f64;
            vertices.push([x, y]);
        }
    }
    let stride = n + 1;
    (vertices, move |i, j| j * stride + i)
}

/// Boundary marker of the outer unit-square boundary.
pub const MARKER_OUTER: i32 = 1;
/// Boundary marker of the interior hole boundary of the punctured domain.
pub const MARKER_HOLE: i32 = 2;

/// Triangulation of the unit square minus the hole (4/9,5/9)².  `n` must be a
/// multiple of 9 so the hole is resolved exactly; hole-boundary facets carry
/// [`MARKER_HOLE`].
pub fn punctured_square(n: usize) -> Result<Mesh> {
    if n == 0 || n % 9 != 0 {
        return Err(Error::InvalidArgument(
            "punctured_square requires n to be a positive multiple of 9".into(),
        ));
    }
    let (grid, vid) = grid_vertices(n, 0.0, 1.0);
    let (h0, h1) = (4 * n / 9, 5 * n / 9);
    let mut elements = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if i >= h0 && i < h1 && j >= h0 && j < h1 {
                continue; // cell inside the hole
            }
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            elements.push(Element {
                vertices: vec![v00, v10, v11],
                region: 0,
            });
            elements.push(Element {
                vertices: vec![v00, v11, v01],
                region: 0,
            });
        }
    }
    // Drop unused (interior hole) vertices and renumber.
    let mut used = vec![false; grid.len()];
    for el in &elements {
        for &v in &el.vertices {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; grid.len()];
    let mut vertices = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            remap[i] = vertices.len();
            vertices.push(grid[i]);
        }
    }
    for el in elements.iter_mut() {
        for v in el.vertices.iter_mut() {
            *v = remap[*v];
        }
    }
    Mesh::from_elements(ElementKind::Triangle, vertices, elements, |mid| {
        let eps = 1e-12;
        let on_outer = mid[0] < eps || mid[0] > 1.0 - eps || mid[1] < eps || mid[1] > 1.0 - eps;
        if on_outer {
            MARKER_OUTER
        } else {
            MARKER_HOLE
        }
    })
}

/// Region tag of the vertical-faults geometry: 1 inside the highly permeable
/// strips, 2 elsewhere.  Left strips occupy y ∈ [0.05+0.2k, 0.15+0.2k] for
/// x ≤ 0.5, right strips y ∈ [0.2k, 0.2k+0.1] for x > 0.5, k = 0..4.
pub fn vertical_faults_region(x: f64, y: f64) -> i32 {
    let in_strip = if x <= 0.5 {
        let t = (y - 0.05).rem_euclid(0.2);
        y >= 0.05 && y <= 0.95 && t <= 0.1
    } else {
        y.rem_euclid(0.2) <= 0.1
    };
    if in_strip {
        1
    } else {
        2
    }
}

/// Triangulation of the unit square with elements tagged by
/// [`vertical_faults_region`] at their centroids.  `n` must be a multiple of 20
/// so strip boundaries align with element edges.
pub fn vertical_faults_mesh(n: usize) -> Result<Mesh> {
    if n == 0 || n % 20 != 0 {
        return Err(Error::InvalidArgument(
            "vertical_faults_mesh requires n to be a positive multiple of 20".into(),
        ));
    }
    let mut mesh = unit_square_triangles(n)?;
    for e in 0..mesh.num_elements() {
        let c = mesh.element_centroid(e);
        mesh.elements[e].region = vertical_faults_region(c[0], c[1]);
    }
    Ok(mesh)
}

/// Triangulation of a polygonal approximation of the unit disk: a fan over a
/// regular 16-gon, uniformly refined `n_refine` times with new boundary
/// vertices projected onto the unit circle.
pub fn polygonal_disk(n_refine: usize) -> Result<Mesh> {
    let sides = 16;
    let mut vertices: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    for k in 0..sides {
        let t = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
        vertices.push([t.cos(), t.sin()]);
    }
    let mut triangles: Vec<[usize; 3]> = (0..sides)
        .map(|k| [0, 1 + k, 1 + (k + 1) % sides])
        .collect();

    for _ in 0..n_refine {
        let (v, t) = refine_triangles(&vertices, &triangles);
        vertices = v;
        triangles = t;
    }

    let elements = triangles
        .iter()
        .map(|t| Element {
            vertices: t.to_vec(),
            region: 0,
        })
        .collect();
    Mesh::from_elements(ElementKind::Triangle, vertices, elements, |_| 1)
}

/// One uniform 1→4 refinement; midpoints of boundary edges are projected to
/// the unit circle.
fn refine_triangles(
    vertices: &[[f64; 2]],
    triangles: &[[usize; 3]],
) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    // Count edge multiplicity to detect boundary edges.
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut verts = vertices.to_vec();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 2]>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let pa = vertices[a];
        let pb = vertices[b];
        let mut p = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        if edge_count[&key] == 1 {
            // Boundary edge: project the new vertex onto the unit circle.
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            p = [p[0] / r, p[1] / r];
        }
        let id = verts.len();
        verts.push(p);
        midpoint.insert(key, id);
        id
    };
    let mut out = Vec::with_capacity(4 * triangles.len());
    for t in triangles {
        let m01 = mid(t[0], t[1], &mut verts);
        let m12 = mid(t[1], t[2], &mut verts);
        let m20 = mid(t[2], t[0], &mut verts);
        out.push([t[0], m01, m20]);
        out.push([t[1], m12, m01]);
        out.push([t[2], m20, m12]);
        out.push([m01, m12, m20]);
    }
    (verts, out)
}
