//! Div-conforming global numbering of the RT space: shared facet dofs with
//! orientation signs, plus element-interior dofs.
//!
//! A global facet dof (E, m) is the m-th Legendre normal moment in the
//! facet's intrinsic (low→high vertex) parameterization with respect to the
//! facet normal (pointing out of the owner).  The element-local dof of the
//! same moment differs by a sign: −1 when the element is the neighbor (its
//! outward normal is −n_E) and (−1)^m when the local edge parameterization is
//! reversed.

use nalgebra::DVector;

use crate::mesh::Mesh;

use super::FeContext;

/// Global div-conforming dof map for the RT space of a mesh.
#[derive(Debug, Clone)]
pub struct DivConforming {
    pub ndofs: usize,
    pub n_facet_dofs: usize,
    /// Per element, per local RT dof: (global dof, sign).
    pub maps: Vec<Vec<(usize, f64)>>,
}

impl DivConforming {
    pub fn new(mesh: &Mesh, ctx: &FeContext) -> Self {
        let nm = ctx.nm();
        let n_facet_dofs = mesh.num_facets() * nm;
        let n_int = ctx.nq() - ctx.rt.num_edge_dofs();
        let ndofs = n_facet_dofs + mesh.num_elements() * n_int;
        let mut maps = Vec::with_capacity(mesh.num_elements());
        for e in 0..mesh.num_elements() {
            let mut local = Vec::with_capacity(ctx.nq());
            for (i_edge, fr) in mesh.elem_facets[e].iter().enumerate() {
                let facet = &mesh.facets[fr.facet];
                let owner_sign = if facet.owner == e { 1.0 } else { -1.0 };
                for m in 0..nm {
                    let flip_sign = if fr.flip && m % 2 == 1 { -1.0 } else { 1.0 };
                    local.push((fr.facet * nm + m, owner_sign * flip_sign));
                }
                let _ = i_edge;
            }
            for j in 0..n_int {
                local.push((n_facet_dofs + e * n_int + j, 1.0));
            }
            maps.push(local);
        }
        DivConforming {
            ndofs,
            n_facet_dofs,
            maps,
        }
    }

    /// Extract the element-local broken coefficients of a global field.
    pub fn to_broken(&self, global: &DVector<f64>) -> Vec<DVector<f64>> {
        self.maps
            .iter()
            .map(|local| {
                DVector::from_iterator(local.len(), local.iter().map(|&(g, s)| s * global[g]))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble::{eval_flux, piola};
    use crate::fem::FeContext;
    use crate::mesh::{polygonal_disk, unit_square_rectangles, unit_square_triangles, ElementKind};

    /// Every global basis function must have a continuous normal trace across
    /// interior facets.
    #[test]
    fn normal_trace_continuity() {
        for (mesh, kind, pmax) in [
            (unit_square_triangles(2).unwrap(), ElementKind::Triangle, 3),
            (polygonal_disk(1).unwrap(), ElementKind::Triangle, 1),
            (unit_square_rectangles(2).unwrap(), ElementKind::Rectangle, 2),
        ] {
            for p in 0..=pmax {
                let ctx = FeContext::new(kind, p).unwrap();
                let conf = DivConforming::new(&mesh, &ctx);
                for (fi, facet) in mesh.facets.iter().enumerate() {
                    let Some(neigh) = facet.neighbor else { continue };
                    let owner = facet.owner;
                    let loc_o = mesh.elem_facets[owner]
                        .iter()
                        .position(|r| r.facet == fi)
                        .unwrap();
                    let loc_n = mesh.elem_facets[neigh]
                        .iter()
                        .position(|r| r.facet == fi)
                        .unwrap();
                    // Check a handful of global dofs supported on these elements.
                    let mut dofs: Vec<usize> = conf.maps[owner].iter().map(|&(g, _)| g).collect();
                    dofs.extend(conf.maps[neigh].iter().map(|&(g, _)| g));
                    dofs.sort_unstable();
                    dofs.dedup();
                    for gd in dofs {
                        let mut global = DVector::zeros(conf.ndofs);
                        global[gd] = 1.0;
                        let broken = conf.to_broken(&global);
                        // Sample p+1 points along the facet.
                        for k in 0..=p {
                            let s = (k as f64 + 0.5) / (p as f64 + 1.0);
                            let mut traces = [0.0, 0.0];
                            for (slot, (e, loc)) in
                                [(owner, loc_o), (neigh, loc_n)].iter().enumerate()
                            {
                                let fr = mesh.elem_facets[*e][*loc];
                                let t = if fr.flip { 1.0 - s } else { s };
                                let edge = ctx.edges[*loc].edge;
                                let rp = [
                                    edge.start[0] + t * edge.dir[0],
                                    edge.start[1] + t * edge.dir[1],
                                ];
                                let map = mesh.affine_map(*e);
                                let v = eval_flux(&ctx, &map, &broken[*e], rp);
                                // Use the facet normal for both sides.
                                traces[slot] = v[0] * facet.normal[0] + v[1] * facet.normal[1];
                            }
                            assert!(
                                (traces[0] - traces[1]).abs() < 1e-10,
                                "{kind:?} p={p} facet {fi} dof {gd}: jump {}",
                                traces[0] - traces[1]
                            );
                        }
                    }
                }
            }
        }
    }

    /// Piola identity spot check: divergence of the mapped basis integrates
    /// against 1 to the net normal flux (divergence theorem on random elements).
    #[test]
    fn divergence_theorem_per_element() {
        let mesh = polygonal_disk(1).unwrap();
        let ctx = FeContext::new(ElementKind::Triangle, 1).unwrap();
        for e in [0usize, 10, 40] {
            let map = mesh.affine_map(e);
            let tab = &ctx.interior;
            for j in 0..ctx.nq() {
                let mut vol = 0.0;
                for (k, &_pt) in tab.rule.points.iter().enumerate() {
                    vol += tab.rule.weights[k] * map.det * tab.rt_divs[k][j] / map.det;
                }
                let mut surf = 0.0;
                for (i_edge, etab) in ctx.edges.iter().enumerate() {
                    let n = mesh.outward_normal(e, i_edge);
                    let len = mesh.facets[mesh.elem_facets[e][i_edge].facet].length;
                    for (k, &w) in etab.w.iter().enumerate() {
                        let v = piola(&map, etab.rt_vals[k][j]);
                        surf += w * len * (v[0] * n[0] + v[1] * n[1]);
                    }
                }
                assert!((vol - surf).abs() < 1e-12, "elem {e} dof {j}");
            }
        }
    }
}
