//! Quadrature rules on the reference interval, triangle, and square.
//!
//! All rules have strictly positive weights.  Triangle rules of arbitrary
//! order are built as collapsed (Duffy) tensor Gauss rules; a special
//! 7-point rule including the element vertices is provided for the mass terms
//! of the p = 1 simplicial discretization.

use crate::{Error, Result};

/// A quadrature rule on a reference element.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Points in reference coordinates.
    pub points: Vec<[f64; 2]>,
    /// Positive weights summing to the reference measure.
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on [0,1]; exact for degree 2m−1.
pub fn gauss_legendre_1d(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "need at least one Gauss point");
    // Newton iteration on P_m over [-1,1], then map to [0,1].
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(m, x);
        nodes[m - 1 - i] = 0.5 * (x + 1.0);
        weights[m - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Legendre polynomial P_m and derivative at x (on [-1,1]).
fn legendre_and_deriv(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Shifted Legendre polynomial P_m on [0,1] (orthogonal, P_m(1−t) = (−1)^m P_m(t)).
pub fn shifted_legendre(m: usize, t: f64) -> f64 {
    let x = 2.0 * t - 1.0;
    legendre_and_deriv_value(m, x)
}

fn legendre_and_deriv_value(m: usize, x: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Tensor Gauss rule with (p+1)² points on the unit square, exact for
/// Q_{2p+1}.  This is the rule whose point set carries the quadrature-space
/// bound-preservation guarantee on rectangles.
pub fn tensor_rule_rect(p: usize) -> QuadratureRule {
    tensor_rule_rect_points(p + 1)
}

/// Tensor Gauss rule with m points per direction on the unit square.
pub fn tensor_rule_rect_points(m: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre_1d(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    QuadratureRule {
        points,
        weights,
        degree: 2 * m - 1,
    }
}

/// Positive-weight rule on the reference triangle {x,y ≥ 0, x+y ≤ 1}, exact
/// for total degree `order`, built by collapsing a tensor Gauss rule.
pub fn rule_triangle(order: usize) -> Result<QuadratureRule> {
    if order > 10 {
        return Err(Error::Unsupported(format!(
            "triangle quadrature order {order} > 10 not supported"
        )));
    }
    Ok(rule_triangle_any(order))
}

pub fn rule_triangle_any(order: usize) -> QuadratureRule {
    // Collapsed coordinates (u, v(1-u)) need 1D exactness of degree order+1.
    let m = (order + 3) / 2;
    let (x, w) = gauss_legendre_1d(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let u = x[i];
            let v = x[j] * (1.0 - u);
            points.push([u, v]);
            weights.push(w[i] * w[j] * (1.0 - u));
        }
    }
    QuadratureRule {
        points,
        weights,
        degree: order,
    }
}

/// One-point centroid rule on the reference triangle (exact degree 1); the
/// p = 0 simplicial mass rule.
pub fn triangle_centroid_rule() -> QuadratureRule {
    QuadratureRule {
        points: vec![[1.0 / 3.0, 1.0 / 3.0]],
        weights: vec![0.5],
        degree: 1,
    }
}

/// 7-point positive-weight rule on the reference triangle including the three
/// vertices (vertices 1/40, edge midpoints 1/15, centroid 9/40 relative to the
/// reference area 1/2); exact to degree 3.  Used as the p = 1 simplicial mass
/// rule so the latent variable is controlled at the vertices.
pub fn vertex_augmented_triangle() -> QuadratureRule {
    let wv = 0.5 / 20.0;
    let wm = 0.5 * 2.0 / 15.0;
    let wc = 0.5 * 9.0 / 20.0;
    QuadratureRule {
        points: vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, 0.0],
            [0.5, 0.5],
            [0.0, 0.5],
            [1.0 / 3.0, 1.0 / 3.0],
        ],
        weights: vec![wv, wv, wv, wm, wm, wm, wc],
        degree: 3,
    }
}
