//! Linear lifting operators into the div-conforming RT space:
//! L maps a broken scalar field u to the flux defined by
//! (A⁻¹ L(u), r) = (u, ∇·r) for all div-conforming r, and L_Γ maps boundary
//! data g to the flux defined by (A⁻¹ L_Γ(g), r) = −⟨g, r·n⟩_{∂Ω}.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::mesh::Mesh;
use crate::{Error, Result};

use super::assemble::{assemble_local, piola};
use super::conforming::DivConforming;
use super::FeContext;

/// Global (A⁻¹·,·) Gram matrix on the div-conforming RT space, factorized
/// once (dense; the liftings run on small meshes only).
pub struct LiftingOperator {
    pub conf: DivConforming,
    chol: Cholesky<f64, Dyn>,
}

impl LiftingOperator {
    pub fn new(
        mesh: &Mesh,
        ctx: &FeContext,
        a: &dyn Fn([f64; 2], i32) -> [[f64; 2]; 2],
    ) -> Result<Self> {
        let conf = DivConforming::new(mesh, ctx);
        let n = conf.ndofs;
        let mut gram = DMatrix::zeros(n, n);
        for e in 0..mesh.num_elements() {
            let region = mesh.elements[e].region;
            let lb = assemble_local(mesh, e, ctx, &|x| a(x, region));
            let map = &conf.maps[e];
            for (li, &(gi, si)) in map.iter().enumerate() {
                for (lj, &(gj, sj)) in map.iter().enumerate() {
                    gram[(gi, gj)] += si * sj * lb.mq[(li, lj)];
                }
            }
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Solver("lifting Gram matrix is not SPD".into()))?;
        Ok(LiftingOperator { conf, chol })
    }

    /// L(u): right-hand side (u, ∇·r) assembled from broken scalar coefficients.
    pub fn lift_scalar(
        &self,
        mesh: &Mesh,
        ctx: &FeContext,
        u: &[DVector<f64>],
    ) -> DVector<f64> {
        let mut b = DVector::zeros(self.conf.ndofs);
        for e in 0..mesh.num_elements() {
            let map = mesh.affine_map(e);
            let tab = &ctx.interior;
            let locmap = &self.conf.maps[e];
            for (k, _) in tab.rule.points.iter().enumerate() {
                // w·det · u(x) · (div̂/det) = w · u(x) · div̂
                let w = tab.rule.weights[k];
                let uval: f64 = tab.sc_vals[k]
                    .iter()
                    .zip(u[e].iter())
                    .map(|(v, c)| v * c)
                    .sum();
                for (lj, &(gj, sj)) in locmap.iter().enumerate() {
                    b[gj] += sj * w * uval * tab.rt_divs[k][lj];
                }
            }
            let _ = map;
        }
        self.chol.solve(&b)
    }

    /// L_Γ(g): right-hand side −⟨g, r·n⟩_{∂Ω}.
    pub fn lift_boundary(
        &self,
        mesh: &Mesh,
        ctx: &FeContext,
        g: &dyn Fn([f64; 2], i32) -> f64,
    ) -> DVector<f64> {
        let mut b = DVector::zeros(self.conf.ndofs);
        for e in 0..mesh.num_elements() {
            let map = mesh.affine_map(e);
            let locmap = &self.conf.maps[e];
            for (i_edge, fr) in mesh.elem_facets[e].iter().enumerate() {
                let facet = &mesh.facets[fr.facet];
                if !facet.is_boundary() {
                    continue;
                }
                let n = mesh.outward_normal(e, i_edge);
                let etab = &ctx.edges[i_edge];
                for (k, &w) in etab.w.iter().enumerate() {
                    let x = map.apply(etab.ref_points[k]);
                    let gval = g(x, facet.boundary_marker);
                    for (lj, &(gj, sj)) in locmap.iter().enumerate() {
                        let v = piola(&map, etab.rt_vals[k][lj]);
                        b[gj] -= sj * w * facet.length * gval * (v[0] * n[0] + v[1] * n[1]);
                    }
                }
            }
        }
        self.chol.solve(&b)
    }

    /// Residual of the defining equation for a computed lifting: returns
    /// max_i |(A⁻¹ q, φ_i) − rhs_i| given the assembled rhs.
    pub fn to_broken(&self, q: &DVector<f64>) -> Vec<DVector<f64>> {
        self.conf.to_broken(q)
    }
}
