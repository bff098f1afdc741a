//! Broken norms: L², the DG norm, and the hybrid energy (triple) norm.

use nalgebra::DVector;

use crate::mesh::Mesh;

use super::assemble::{phys_grad, piola};
use super::project::eval_facet_poly;
use super::FeContext;

/// L² norm of a broken scalar field.
pub fn l2_norm_scalar(mesh: &Mesh, ctx: &FeContext, u: &[DVector<f64>]) -> f64 {
    let mut acc = 0.0;
    for e in 0..mesh.num_elements() {
        let map = mesh.affine_map(e);
        let tab = &ctx.interior;
        for (k, _) in tab.rule.points.iter().enumerate() {
            let val: f64 = tab.sc_vals[k]
                .iter()
                .zip(u[e].iter())
                .map(|(v, c)| v * c)
                .sum();
            acc += tab.rule.weights[k] * map.det * val * val;
        }
    }
    acc.sqrt()
}

/// L² norm of a broken flux field weighted by A^{-1/2}: ‖A^{-1/2} q‖.
pub fn l2_norm_flux_ainv(
    mesh: &Mesh,
    ctx: &FeContext,
    q: &[DVector<f64>],
    a: &dyn Fn([f64; 2], i32) -> [[f64; 2]; 2],
) -> f64 {
    let mut acc = 0.0;
    for e in 0..mesh.num_elements() {
        let map = mesh.affine_map(e);
        let region = mesh.elements[e].region;
        let tab = &ctx.interior;
        for (k, &pt) in tab.rule.points.iter().enumerate() {
            let x = map.apply(pt);
            let ainv = super::assemble::inv2(a(x, region));
            let mut v = [0.0, 0.0];
            for (rv, c) in tab.rt_vals[k].iter().zip(q[e].iter()) {
                let pv = piola(&map, *rv);
                v[0] += c * pv[0];
                v[1] += c * pv[1];
            }
            let av = [
                ainv[0][0] * v[0] + ainv[0][1] * v[1],
                ainv[1][0] * v[0] + ainv[1][1] * v[1],
            ];
            acc += tab.rule.weights[k] * map.det * (av[0] * v[0] + av[1] * v[1]);
        }
    }
    acc.sqrt()
}

/// Squared broken energy term Σ_T ‖A^{1/2} ∇u‖²_T.
fn grad_energy_sq(
    mesh: &Mesh,
    ctx: &FeContext,
    u: &[DVector<f64>],
    a: &dyn Fn([f64; 2], i32) -> [[f64; 2]; 2],
) -> f64 {
    let mut acc = 0.0;
    for e in 0..mesh.num_elements() {
        let map = mesh.affine_map(e);
        let region = mesh.elements[e].region;
        let tab = &ctx.interior;
        for (k, &pt) in tab.rule.points.iter().enumerate() {
            let x = map.apply(pt);
            let amat = a(x, region);
            let mut g = [0.0, 0.0];
            for (gr, c) in tab.sc_grads[k].iter().zip(u[e].iter()) {
                let pg = phys_grad(&map, *gr);
                g[0] += c * pg[0];
                g[1] += c * pg[1];
            }
            let ag = [
                amat[0][0] * g[0] + amat[0][1] * g[1],
                amat[1][0] * g[0] + amat[1][1] * g[1],
            ];
            acc += tab.rule.weights[k] * map.det * (ag[0] * g[0] + ag[1] * g[1]);
        }
    }
    acc
}

/// Trace of a broken scalar field on a facet, from the side of element `e`
/// with local edge `loc`, at facet parameter s (intrinsic low→high direction).
fn facet_trace(
    mesh: &Mesh,
    ctx: &FeContext,
    u: &DVector<f64>,
    e: usize,
    loc: usize,
    s: f64,
) -> f64 {
    let fr = mesh.elem_facets[e][loc];
    let t = if fr.flip { 1.0 - s } else { s };
    let edge = ctx.edges[loc].edge;
    let rp = [edge.start[0] + t * edge.dir[0], edge.start[1] + t * edge.dir[1]];
    let (vals, _) = ctx.scalar.eval(rp);
    vals.iter().zip(u.iter()).map(|(v, c)| v * c).sum()
}

/// Locate (element, local edge) pairs adjacent to a facet.
pub fn facet_sides(mesh: &Mesh, fi: usize) -> Vec<(usize, usize)> {
    let f = &mesh.facets[fi];
    let mut out = Vec::with_capacity(2);
    for e in std::iter::once(f.owner).chain(f.neighbor) {
        let loc = mesh.elem_facets[e].iter().position(|r| r.facet == fi).unwrap();
        out.push((e, loc));
    }
    out
}

/// DG norm: (Σ_T ‖A^{1/2}∇u‖²_T + Σ_E h_E⁻¹ ‖[u]‖²_E)^{1/2}, with boundary
/// facets contributing the single-valued trace.
pub fn dg_norm(
    mesh: &Mesh,
    ctx: &FeContext,
    u: &[DVector<f64>],
    a: &dyn Fn([f64; 2], i32) -> [[f64; 2]; 2],
) -> f64 {
    let mut acc = grad_energy_sq(mesh, ctx, u, a);
    let (gt, gw) = super::quadrature::gauss_legendre_1d(ctx.p + 2);
    for fi in 0..mesh.num_facets() {
        let sides = facet_sides(mesh, fi);
        let len = mesh.facets[fi].length;
        let mut jump_sq = 0.0;
        for (&s, &w) in gt.iter().zip(&gw) {
            let mut jump = facet_trace(mesh, ctx, &u[sides[0].0], sides[0].0, sides[0].1, s);
            if sides.len() == 2 {
                jump -= facet_trace(mesh, ctx, &u[sides[1].0], sides[1].0, sides[1].1, s);
            }
            jump_sq += w * len * jump * jump;
        }
        acc += jump_sq / len;
    }
    acc.sqrt()
}

/// Hybrid energy norm:
/// ( ‖A^{-1/2}q‖² + Σ_T ‖A^{1/2}∇u‖²_T + Σ_T h_T⁻¹ ‖u−û‖²_{∂T} )^{1/2}.
pub fn triple_norm(
    mesh: &Mesh,
    ctx: &FeContext,
    q: &[DVector<f64>],
    u: &[DVector<f64>],
    uhat: &[f64],
    a: &dyn Fn([f64; 2], i32) -> [[f64; 2]; 2],
) -> f64 {
    let nm = ctx.nm();
    let mut acc = l2_norm_flux_ainv(mesh, ctx, q, a).powi(2) + grad_energy_sq(mesh, ctx, u, a);
    let (gt, gw) = super::quadrature::gauss_legendre_1d(ctx.p + 2);
    for e in 0..mesh.num_elements() {
        let ht = mesh.element_diameter(e);
        let mut bnd = 0.0;
        for (loc, fr) in mesh.elem_facets[e].iter().enumerate() {
            let len = mesh.facets[fr.facet].length;
            let coeffs = &uhat[fr.facet * nm..(fr.facet + 1) * nm];
            for (&s, &w) in gt.iter().zip(&gw) {
                let diff = facet_trace(mesh, ctx, &u[e], e, loc, s) - eval_facet_poly(coeffs, s);
                bnd += w * len * diff * diff;
            }
        }
        acc += bnd / ht;
    }
    acc.sqrt()
}
