//! L² projections onto element and facet polynomial spaces.

use nalgebra::{DMatrix, DVector};

use crate::mesh::Mesh;

use super::quadrature::{gauss_legendre_1d, shifted_legendre};
use super::FeContext;

/// L² projection of `f` onto the scalar space of element `e`.
pub fn l2_project_element(
    mesh: &Mesh,
    e: usize,
    ctx: &FeContext,
    f: &dyn Fn([f64; 2]) -> f64,
) -> DVector<f64> {
    let map = mesh.affine_map(e);
    let nu = ctx.nu();
    let tab = &ctx.interior;
    let mut mass = DMatrix::zeros(nu, nu);
    let mut rhs = DVector::zeros(nu);
    for (k, &pt) in tab.rule.points.iter().enumerate() {
        let wdet = tab.rule.weights[k] * map.det;
        let x = map.apply(pt);
        let fx = f(x);
        let sv = &tab.sc_vals[k];
        for i in 0..nu {
            rhs[i] += wdet * fx * sv[i];
            for j in 0..nu {
                mass[(i, j)] += wdet * sv[i] * sv[j];
            }
        }
    }
    mass.cholesky()
        .expect("element mass matrix is SPD")
        .solve(&rhs)
}

/// L² projection of boundary data `g` onto the degree-p Legendre basis of
/// facet `fi`, in the facet's intrinsic (low→high vertex) parameterization.
pub fn l2_project_facet(
    mesh: &Mesh,
    fi: usize,
    p: usize,
    g: &dyn Fn([f64; 2]) -> f64,
) -> Vec<f64> {
    let facet = &mesh.facets[fi];
    let a = mesh.vertices[facet.vertices[0]];
    let b = mesh.vertices[facet.vertices[1]];
    let (t, w) = gauss_legendre_1d(p + 5);
    let mut coeffs = vec![0.0; p + 1];
    for (&tk, &wk) in t.iter().zip(&w) {
        let x = [a[0] + tk * (b[0] - a[0]), a[1] + tk * (b[1] - a[1])];
        let gx = g(x);
        for (m, cm) in coeffs.iter_mut().enumerate() {
            // Shifted Legendre normalization: ∫₀¹ P_m² dt = 1/(2m+1).
            *cm += (2 * m + 1) as f64 * wk * gx * shifted_legendre(m, tk);
        }
    }
    coeffs
}

/// Evaluate a facet polynomial (Legendre coefficients) at parameter s ∈ [0,1].
pub fn eval_facet_poly(coeffs: &[f64], s: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(m, &c)| c * shifted_legendre(m, s))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FeContext;
    use crate::mesh::{unit_square_triangles, ElementKind};

    #[test]
    fn constant_reproduced() {
        let mesh = unit_square_triangles(2).unwrap();
        let ctx = FeContext::new(ElementKind::Triangle, 2).unwrap();
        let c = l2_project_element(&mesh, 1, &ctx, &|_| 3.25);
        // Partition-of-unity basis: all nodal coefficients equal the constant.
        for i in 0..ctx.nu() {
            assert!((c[i] - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_of_x_onto_p0() {
        // On the reference triangle, the P0 projection of f = x is 1/3.
        let mesh = crate::mesh::Mesh::from_elements(
            ElementKind::Triangle,
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![crate::mesh::Element {
                vertices: vec![0, 1, 2],
                region: 0,
            }],
            |_| 1,
        )
        .unwrap();
        let ctx = FeContext::new(ElementKind::Triangle, 0).unwrap();
        let c = l2_project_element(&mesh, 0, &ctx, &|x| x[0]);
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn orthogonality_residual() {
        let mesh = unit_square_triangles(3).unwrap();
        let ctx = FeContext::new(ElementKind::Triangle, 2).unwrap();
        let f = |x: [f64; 2]| (3.0 * x[0]).sin() * x[1];
        let e = 5;
        let c = l2_project_element(&mesh, e, &ctx, &f);
        // (f − Πf, v_i) ≈ 0 for all basis functions.
        let map = mesh.affine_map(e);
        let tab = &ctx.interior;
        for i in 0..ctx.nu() {
            let mut res = 0.0;
            for (k, &pt) in tab.rule.points.iter().enumerate() {
                let x = map.apply(pt);
                let pf: f64 = tab.sc_vals[k]
                    .iter()
                    .zip(c.iter())
                    .map(|(v, ci)| v * ci)
                    .sum();
                res += tab.rule.weights[k] * map.det * (f(x) - pf) * tab.sc_vals[k][i];
            }
            assert!(res.abs() < 1e-12);
        }
    }

    #[test]
    fn facet_projection_linear() {
        // g = 1−x on the bottom edge from (0,0) to (1,0), p=1: the projection
        // reproduces g; endpoint values are (1, 0).
        let mesh = unit_square_triangles(1).unwrap();
        let fi = mesh
            .facets
            .iter()
            .position(|f| {
                let a = mesh.vertices[f.vertices[0]];
                let b = mesh.vertices[f.vertices[1]];
                a[1] == 0.0 && b[1] == 0.0
            })
            .unwrap();
        let c = l2_project_facet(&mesh, fi, 1, &|x| 1.0 - x[0]);
        assert!((eval_facet_poly(&c, 0.0) - 1.0).abs() < 1e-12);
        assert!((eval_facet_poly(&c, 1.0) - 0.0).abs() < 1e-12);
    }
}
