//! Nodal scalar reference bases: P_p on the reference triangle and Q_p on the
//! reference square.
//!
//! Both families are realized through a monomial expansion whose coefficients
//! are obtained by inverting the Vandermonde matrix at the nodal set
//! (equispaced lattice on the triangle, tensor Gauss points on the square —
//! the latter makes the Lagrange basis coincide with the quadrature-point
//! basis used by the bound-preservation theory).

use crate::mesh::ElementKind;
use crate::{Error, Result};
use nalgebra::DMatrix;

use super::quadrature::gauss_legendre_1d;

/// Scalar reference basis of degree p on a triangle (P_p) or square (Q_p).
#[derive(Debug, Clone)]
pub struct ScalarBasis {
    pub kind: ElementKind,
    pub degree: usize,
    /// Monomial exponents (a,b) for x^a y^b.
    monomials: Vec<(i32, i32)>,
    /// coeffs[(k, j)]: coefficient of monomial k in basis function j.
    coeffs: DMatrix<f64>,
    /// Nodal points (basis is Lagrange: φ_j(node_i) = δ_ij).
    pub nodes: Vec<[f64; 2]>,
}

/// Dimension of the scalar space on one element.
pub fn scalar_dim(kind: ElementKind, p: usize) -> usize {
    match kind {
        ElementKind::Triangle => (p + 1) * (p + 2) / 2,
        ElementKind::Rectangle => (p + 1) * (p + 1),
    }
}

/// Check the supported degree range (p ≤ 3 on triangles, p ≤ 2 on rectangles).
pub fn check_degree(kind: ElementKind, p: usize) -> Result<()> {
    let max = match kind {
        ElementKind::Triangle => 3,
        ElementKind::Rectangle => 2,
    };
    if p > max {
        return Err(Error::Unsupported(format!(
            "degree p={p} not supported on {kind:?} (max {max})"
        )));
    }
    Ok(())
}

impl ScalarBasis {
    pub fn new(kind: ElementKind, p: usize) -> Result<Self> {
        check_degree(kind, p)?;
        let monomials = scalar_monomials(kind, p);
        let nodes = scalar_nodes(kind, p);
        let n = monomials.len();
        assert_eq!(nodes.len(), n);
        let mut v = DMatrix::zeros(n, n);
        for (i, node) in nodes.iter().enumerate() {
            for (k, &(a, b)) in monomials.iter().enumerate() {
                v[(i, k)] = node[0].powi(a) * node[1].powi(b);
            }
        }
        let coeffs = v
            .try_inverse()
            .expect("scalar Vandermonde is invertible for supported degrees");
        // V C = I with V[(node, monomial)], so basis function j has monomial
        // coefficients C[(·, j)], i.e. column j of the inverse.
        Ok(ScalarBasis {
            kind,
            degree: p,
            monomials,
            coeffs,
            nodes,
        })
    }

    pub fn ndofs(&self) -> usize {
        self.monomials.len()
    }

    /// Values and gradients of all basis functions at a reference point.
    pub fn eval(&self, x: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let n = self.ndofs();
        let mut vals = vec![0.0; n];
        let mut grads = vec![[0.0, 0.0]; n];
        for (k, &(a, b)) in self.monomials.iter().enumerate() {
            let m = x[0].powi(a) * x[1].powi(b);
            let mx = if a == 0 {
                0.0
            } else {
                a as f64 * x[0].powi(a - 1) * x[1].powi(b)
            };
            let my = if b == 0 {
                0.0
            } else {
                b as f64 * x[0].powi(a) * x[1].powi(b - 1)
            };
            for j in 0..n {
                let c = self.coeffs[(k, j)];
                vals[j] += c * m;
                grads[j][0] += c * mx;
                grads[j][1] += c * my;
            }
        }
        (vals, grads)
    }

    /// Tabulate values (rows: points, cols: basis functions).
    pub fn tabulate(&self, points: &[[f64; 2]]) -> (DMatrix<f64>, Vec<Vec<[f64; 2]>>) {
        let n = self.ndofs();
        let mut vals = DMatrix::zeros(points.len(), n);
        let mut grads = Vec::with_capacity(points.len());
        for (i, &p) in points.iter().enumerate() {
            let (v, g) = self.eval(p);
            for j in 0..n {
                vals[(i, j)] = v[j];
            }
            grads.push(g);
        }
        (vals, grads)
    }
}

fn scalar_monomials(kind: ElementKind, p: usize) -> Vec<(i32, i32)> {
    let mut m = Vec::new();
    match kind {
        ElementKind::Triangle => {
            for d in 0..=p as i32 {
                for a in (0..=d).rev() {
                    m.push((a, d - a));
                }
            }
        }
        ElementKind::Rectangle => {
            for b in 0..=p as i32 {
                for a in 0..=p as i32 {
                    m.push((a, b));
                }
            }
        }
    }
    m
}

fn scalar_nodes(kind: ElementKind, p: usize) -> Vec<[f64; 2]> {
    match kind {
        ElementKind::Triangle => {
            if p == 0 {
                return vec![[1.0 / 3.0, 1.0 / 3.0]];
            }
            let mut nodes = Vec::new();
            for j in 0..=p {
                for i in 0..=(p - j) {
                    nodes.push([i as f64 / p as f64, j as f64 / p as f64]);
                }
            }
            nodes
        }
        ElementKind::Rectangle => {
            // Tensor Gauss points: the Lagrange basis at these nodes is the
            // quadrature-point basis of the (p+1)² tensor rule.
            let (x, _) = gauss_legendre_1d(p + 1);
            let mut nodes = Vec::new();
            for &gy in &x {
                for &gx in &x {
                    nodes.push([gx, gy]);
                }
            }
            nodes
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p0_is_constant() {
        let b = ScalarBasis::new(ElementKind::Triangle, 0).unwrap();
        let (v, g) = b.eval([0.3, 0.3]);
        assert_eq!(v.len(), 1);
        assert!((v[0] - 1.0).abs() < 1e-14);
        assert!(g[0][0].abs() < 1e-14 && g[0][1].abs() < 1e-14);
    }

    #[test]
    fn partition_of_unity() {
        for kind in [ElementKind::Triangle, ElementKind::Rectangle] {
            let pmax = if kind == ElementKind::Triangle { 3 } else { 2 };
            for p in 0..=pmax {
                let b = ScalarBasis::new(kind, p).unwrap();
                assert_eq!(b.ndofs(), scalar_dim(kind, p));
                for x in [[0.11, 0.23], [0.4, 0.5], [0.05, 0.9]] {
                    let (v, g) = b.eval(x);
                    let s: f64 = v.iter().sum();
                    assert!((s - 1.0).abs() < 1e-12, "{kind:?} p={p}");
                    let gx: f64 = g.iter().map(|gi| gi[0]).sum();
                    let gy: f64 = g.iter().map(|gi| gi[1]).sum();
                    assert!(gx.abs() < 1e-11 && gy.abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn lagrange_property() {
        for kind in [ElementKind::Triangle, ElementKind::Rectangle] {
            let b = ScalarBasis::new(kind, 2).unwrap();
            for (i, &node) in b.nodes.iter().enumerate() {
                let (v, _) = b.eval(node);
                for (j, &vj) in v.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((vj - expect).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let b = ScalarBasis::new(ElementKind::Triangle, 3).unwrap();
        let x = [0.27, 0.31];
        let h = 1e-6;
        let (_, g) = b.eval(x);
        let (vpx, _) = b.eval([x[0] + h, x[1]]);
        let (vmx, _) = b.eval([x[0] - h, x[1]]);
        let (vpy, _) = b.eval([x[0], x[1] + h]);
        let (vmy, _) = b.eval([x[0], x[1] - h]);
        for j in 0..b.ndofs() {
            assert!(((vpx[j] - vmx[j]) / (2.0 * h) - g[j][0]).abs() < 1e-7);
            assert!(((vpy[j] - vmy[j]) / (2.0 * h) - g[j][1]).abs() < 1e-7);
        }
    }

    #[test]
    fn degree_limits() {
        assert!(ScalarBasis::new(ElementKind::Triangle, 4).is_err());
        assert!(ScalarBasis::new(ElementKind::Rectangle, 3).is_err());
    }
}
