//! Raviart–Thomas reference bases RT_p on the triangle and the square,
//! constructed from moment degrees of freedom.
//!
//! Degrees of freedom (in order):
//! - for each local edge i and moment m = 0..p: the normal moment
//!   λ_{i,m}(v) = ∫_ê_i v·n̂_i P_m(t) dŝ = |ê_i| ∫₀¹ v(γ_i(t))·n̂_i P_m(t) dt
//!   with P_m the shifted Legendre polynomial in the edge parameter t (local
//!   vertex i → i+1).  The reference arclength factor makes the functional
//!   equal to the physical normal-flux moment under the Piola map, which is
//!   what glues traces across facets whose two reference edges have different
//!   lengths;
//! - interior moments against a monomial basis of [P_{p−1}]² (triangle) or
//!   Q_{p−1,p} × Q_{p,p−1} (square).
//!
//! Because P_m(1−t) = (−1)^m P_m(t), reversing an edge's parameterization
//! multiplies the m-th edge dof by (−1)^m, which is what the div-conforming
//! global numbering uses for orientation.

use crate::mesh::ElementKind;
use crate::{Error, Result};
use nalgebra::DMatrix;

use super::quadrature::{gauss_legendre_1d, rule_triangle_any, shifted_legendre, tensor_rule_rect_points};

/// A generating monomial vector field for RT_p.
#[derive(Debug, Clone, Copy)]
enum Gen {
    /// (x^a y^b, 0)
    X(i32, i32),
    /// (0, x^a y^b)
    Y(i32, i32),
    /// (x, y) · x^a y^b
    Pos(i32, i32),
}

impl Gen {
    fn eval(self, p: [f64; 2]) -> [f64; 2] {
        let mono = |a: i32, b: i32| p[0].powi(a) * p[1].powi(b);
        match self {
            Gen::X(a, b) => [mono(a, b), 0.0],
            Gen::Y(a, b) => [0.0, mono(a, b)],
            Gen::Pos(a, b) => [p[0] * mono(a, b), p[1] * mono(a, b)],
        }
    }

    fn div(self, p: [f64; 2]) -> f64 {
        let mono = |a: i32, b: i32| {
            if a < 0 || b < 0 {
                0.0
            } else {
                p[0].powi(a) * p[1].powi(b)
            }
        };
        match self {
            Gen::X(a, b) => a as f64 * mono(a - 1, b),
            Gen::Y(a, b) => b as f64 * mono(a, b - 1),
            Gen::Pos(a, b) => (2 + a + b) as f64 * mono(a, b),
        }
    }
}

/// Reference-element edge: start point, direction, outward normal.
#[derive(Debug, Clone, Copy)]
pub struct RefEdge {
    pub start: [f64; 2],
    pub dir: [f64; 2],
    pub normal: [f64; 2],
    pub length: f64,
}

/// Local edges of the reference element, ordered as in the mesh convention
/// (edge i joins local vertices i and i+1).
pub fn reference_edges(kind: ElementKind) -> Vec<RefEdge> {
    let sqrt2 = std::f64::consts::SQRT_2;
    match kind {
        ElementKind::Triangle => vec![
            RefEdge {
                start: [0.0, 0.0],
                dir: [1.0, 0.0],
                normal: [0.0, -1.0],
                length: 1.0,
            },
            RefEdge {
                start: [1.0, 0.0],
                dir: [-1.0, 1.0],
                normal: [1.0 / sqrt2, 1.0 / sqrt2],
                length: sqrt2,
            },
            RefEdge {
                start: [0.0, 1.0],
                dir: [0.0, -1.0],
                normal: [-1.0, 0.0],
                length: 1.0,
            },
        ],
        ElementKind::Rectangle => vec![
            RefEdge {
                start: [0.0, 0.0],
                dir: [1.0, 0.0],
                normal: [0.0, -1.0],
                length: 1.0,
            },
            RefEdge {
                start: [1.0, 0.0],
                dir: [0.0, 1.0],
                normal: [1.0, 0.0],
                length: 1.0,
            },
            RefEdge {
                start: [1.0, 1.0],
                dir: [-1.0, 0.0],
                normal: [0.0, 1.0],
                length: 1.0,
            },
            RefEdge {
                start: [0.0, 1.0],
                dir: [0.0, -1.0],
                normal: [-1.0, 0.0],
                length: 1.0,
            },
        ],
    }
}

/// Dimension of RT_p on one element.
pub fn rt_dim(kind: ElementKind, p: usize) -> usize {
    match kind {
        ElementKind::Triangle => (p + 1) * (p + 3),
        ElementKind::Rectangle => 2 * (p + 1) * (p + 2),
    }
}

/// RT_p reference basis.
#[derive(Debug, Clone)]
pub struct RtBasis {
    pub kind: ElementKind,
    pub degree: usize,
    generators: Vec<Gen>,
    /// coeffs[(g, j)]: coefficient of generator g in basis function j.
    coeffs: DMatrix<f64>,
    pub num_edges: usize,
}

impl RtBasis {
    pub fn new(kind: ElementKind, p: usize) -> Result<Self> {
        super::basis::check_degree(kind, p)?;
        let generators = rt_generators(kind, p);
        let n = generators.len();
        assert_eq!(n, rt_dim(kind, p));
        let edges = reference_edges(kind);
        let num_edges = edges.len();

        let mut dual = DMatrix::zeros(n, n);
        // Edge moment dofs.
        let (gt, gw) = gauss_legendre_1d(p + 2);
        for (i, edge) in edges.iter().enumerate() {
            for m in 0..=p {
                let row = i * (p + 1) + m;
                for (j, g) in generators.iter().enumerate() {
                    let mut acc = 0.0;
                    for (&t, &w) in gt.iter().zip(&gw) {
                        let x = [
                            edge.start[0] + t * edge.dir[0],
                            edge.start[1] + t * edge.dir[1],
                        ];
                        let v = g.eval(x);
                        acc += w
                            * edge.length
                            * (v[0] * edge.normal[0] + v[1] * edge.normal[1])
                            * shifted_legendre(m, t);
                    }
                    dual[(row, j)] = acc;
                }
            }
        }
        // Interior moment dofs.
        let interior = interior_moments(kind, p);
        let rule = match kind {
            ElementKind::Triangle => rule_triangle_any(2 * p + 2),
            ElementKind::Rectangle => tensor_rule_rect_points(p + 2),
        };
        for (k, w_field) in interior.iter().enumerate() {
            let row = num_edges * (p + 1) + k;
            for (j, g) in generators.iter().enumerate() {
                let mut acc = 0.0;
                for (pt, &w) in rule.points.iter().zip(&rule.weights) {
                    let v = g.eval(*pt);
                    let wv = w_field.eval(*pt);
                    acc += w * (v[0] * wv[0] + v[1] * wv[1]);
                }
                dual[(row, j)] = acc;
            }
        }

        let coeffs = dual
            .try_inverse()
            .ok_or_else(|| Error::Solver("RT dual matrix is singular".into()))?;
        Ok(RtBasis {
            kind,
            degree: p,
            generators,
            coeffs,
            num_edges,
        })
    }

    pub fn ndofs(&self) -> usize {
        self.generators.len()
    }

    pub fn num_edge_dofs(&self) -> usize {
        self.num_edges * (self.degree + 1)
    }

    /// Values and divergences of all basis functions at a reference point.
    pub fn eval(&self, x: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
        let n = self.ndofs();
        let mut vals = vec![[0.0, 0.0]; n];
        let mut divs = vec![0.0; n];
        for (g, gen) in self.generators.iter().enumerate() {
            let v = gen.eval(x);
            let d = gen.div(x);
            for j in 0..n {
                let c = self.coeffs[(g, j)];
                vals[j][0] += c * v[0];
                vals[j][1] += c * v[1];
                divs[j] += c * d;
            }
        }
        (vals, divs)
    }
}

fn rt_generators(kind: ElementKind, p: usize) -> Vec<Gen> {
    let mut g = Vec::new();
    let p = p as i32;
    match kind {
        ElementKind::Triangle => {
            for d in 0..=p {
                for a in 0..=d {
                    g.push(Gen::X(a, d - a));
                }
            }
            for d in 0..=p {
                for a in 0..=d {
                    g.push(Gen::Y(a, d - a));
                }
            }
            for a in 0..=p {
                g.push(Gen::Pos(a, p - a));
            }
        }
        ElementKind::Rectangle => {
            for b in 0..=p {
                for a in 0..=(p + 1) {
                    g.push(Gen::X(a, b));
                }
            }
            for b in 0..=(p + 1) {
                for a in 0..=p {
                    g.push(Gen::Y(a, b));
                }
            }
        }
    }
    g
}

/// Interior dual fields for RT_p.
fn interior_moments(kind: ElementKind, p: usize) -> Vec<Gen> {
    let mut m = Vec::new();
    if p == 0 {
        return m;
    }
    let p = p as i32;
    match kind {
        ElementKind::Triangle => {
            for d in 0..p {
                for a in 0..=d {
                    m.push(Gen::X(a, d - a));
                }
            }
            for d in 0..p {
                for a in 0..=d {
                    m.push(Gen::Y(a, d - a));
                }
            }
        }
        ElementKind::Rectangle => {
            for b in 0..=p {
                for a in 0..p {
                    m.push(Gen::X(a, b));
                }
            }
            for b in 0..p {
                for a in 0..=p {
                    m.push(Gen::Y(a, b));
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rt0_triangle_normal_traces() {
        let rt = RtBasis::new(ElementKind::Triangle, 0).unwrap();
        assert_eq!(rt.ndofs(), 3);
        let edges = reference_edges(ElementKind::Triangle);
        for j in 0..3 {
            for (i, e) in edges.iter().enumerate() {
                for &t in &[0.2, 0.5, 0.9] {
                    let x = [e.start[0] + t * e.dir[0], e.start[1] + t * e.dir[1]];
                    let (v, _) = rt.eval(x);
                    let tr = v[j][0] * e.normal[0] + v[j][1] * e.normal[1];
                    // Unit total flux through own edge: constant trace 1/|ê|.
                    let expect = if i == j { 1.0 / e.length } else { 0.0 };
                    assert!(
                        (tr - expect).abs() < 1e-12,
                        "basis {j} edge {i}: trace {tr}"
                    );
                }
            }
        }
    }

    #[test]
    fn dof_duality() {
        for (kind, pmax) in [(ElementKind::Triangle, 3), (ElementKind::Rectangle, 2)] {
            for p in 0..=pmax {
                let rt = RtBasis::new(kind, p).unwrap();
                // Edge dofs of basis functions: λ_i(φ_j) = δ_ij.
                let (gt, gw) = gauss_legendre_1d(p + 2);
                let edges = reference_edges(kind);
                for (i, e) in edges.iter().enumerate() {
                    for m in 0..=p {
                        let row = i * (p + 1) + m;
                        for j in 0..rt.ndofs() {
                            let mut acc = 0.0;
                            for (&t, &w) in gt.iter().zip(&gw) {
                                let x = [e.start[0] + t * e.dir[0], e.start[1] + t * e.dir[1]];
                                let (v, _) = rt.eval(x);
                                acc += w
                                    * e.length
                                    * (v[j][0] * e.normal[0] + v[j][1] * e.normal[1])
                                    * shifted_legendre(m, t);
                            }
                            let expect = if row == j { 1.0 } else { 0.0 };
                            assert!(
                                (acc - expect).abs() < 1e-10,
                                "{kind:?} p={p} dof {row} basis {j}: {acc}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn divergence_matches_finite_difference() {
        for (kind, p) in [
            (ElementKind::Triangle, 2),
            (ElementKind::Triangle, 3),
            (ElementKind::Rectangle, 2),
        ] {
            let rt = RtBasis::new(kind, p).unwrap();
            let x = [0.31, 0.27];
            let h = 1e-6;
            let (_, d) = rt.eval(x);
            let (vpx, _) = rt.eval([x[0] + h, x[1]]);
            let (vmx, _) = rt.eval([x[0] - h, x[1]]);
            let (vpy, _) = rt.eval([x[0], x[1] + h]);
            let (vmy, _) = rt.eval([x[0], x[1] - h]);
            for j in 0..rt.ndofs() {
                let fd = (vpx[j][0] - vmx[j][0]) / (2.0 * h) + (vpy[j][1] - vmy[j][1]) / (2.0 * h);
                assert!((fd - d[j]).abs() < 1e-6, "{kind:?} p={p} basis {j}");
            }
        }
    }

    #[test]
    fn normal_trace_degree_p_per_edge() {
        // v·n on each edge must be a polynomial of degree ≤ p in the edge
        // parameter: fit at p+1 points and check elsewhere.
        for (kind, pmax) in [(ElementKind::Triangle, 3), (ElementKind::Rectangle, 2)] {
            for p in 0..=pmax {
                let rt = RtBasis::new(kind, p).unwrap();
                for e in reference_edges(kind) {
                    for j in 0..rt.ndofs() {
                        // Sample the trace and fit a degree-p polynomial.
                        let tr = |t: f64| {
                            let x = [e.start[0] + t * e.dir[0], e.start[1] + t * e.dir[1]];
                            let (v, _) = rt.eval(x);
                            v[j][0] * e.normal[0] + v[j][1] * e.normal[1]
                        };
                        let nodes: Vec<f64> =
                            (0..=p).map(|k| (k as f64 + 0.5) / (p as f64 + 1.0)).collect();
                        let check = 0.123456;
                        // Lagrange interpolation through the p+1 nodes.
                        let mut interp = 0.0;
                        for (a, &ta) in nodes.iter().enumerate() {
                            let mut l = 1.0;
                            for (b, &tb) in nodes.iter().enumerate() {
                                if a != b {
                                    l *= (check - tb) / (ta - tb);
                                }
                            }
                            interp += l * tr(ta);
                        }
                        assert!(
                            (interp - tr(check)).abs() < 1e-9,
                            "{kind:?} p={p} basis {j}: trace not degree {p}"
                        );
                    }
                }
            }
        }
    }
}
