//! Dense monolithic assembly of one linearized step, without any elimination
//! or condensation.  This is a correctness reference for the condensed path:
//! both must produce identical coefficient vectors up to solver roundoff.

use nalgebra::{DMatrix, DVector};

use super::newton::{LinearizedData, NewtonStep};
use super::Discretization;
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Solve the full coupled linearized system with a dense LU factorization.
/// Unknown ordering: per element (q, u, ψ), then all facet dofs.
pub fn monolithic_solve(
    disc: &Discretization,
    mesh: &Mesh,
    alpha: f64,
    b1: &[DVector<f64>],
    lin: &LinearizedData,
) -> Result<NewtonStep> {
    let ne = mesh.num_elements();
    let nq = disc.ctx.nq();
    let nu = disc.ctx.nu();
    let nm = disc.ctx.nm();
    let per_elem = nq + 2 * nu;
    let n_hat = mesh.num_facets() * nm;
    let n = ne * per_elem + n_hat;

    let mut mat = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    let hat0 = ne * per_elem;

    for e in 0..ne {
        let oq = e * per_elem;
        let ou = oq + nq;
        let op = ou + nu;
        let dofs = disc.local_facet_dofs(mesh, e);

        // Flux equation: Mq q + B̃ᵀ u + Cᵀ û = 0.
        mat.view_mut((oq, oq), (nq, nq)).copy_from(&disc.blocks[e].mq);
        mat.view_mut((oq, ou), (nq, nu))
            .copy_from(&disc.btilde[e].transpose());
        let ct = disc.cmat[e].transpose();
        for (li, &g) in dofs.iter().enumerate() {
            for i in 0..nq {
                mat[(oq + i, hat0 + g)] += ct[(i, li)];
            }
        }

        // Proximal equation: −α B̃ q + Mm ψ = b1.
        for i in 0..nu {
            for j in 0..nq {
                mat[(ou + i, oq + j)] = -alpha * disc.btilde[e][(i, j)];
            }
            for j in 0..nu {
                mat[(ou + i, op + j)] = disc.mm[e][(i, j)];
            }
            rhs[ou + i] = b1[e][i];
        }

        // Latent equation: Mm u − D ψ = b3.
        for i in 0..nu {
            for j in 0..nu {
                mat[(op + i, ou + j)] = disc.mm[e][(i, j)];
                mat[(op + i, op + j)] = -lin.d[e][(i, j)];
            }
            rhs[op + i] = lin.b3[e][i];
        }

        // Flux continuity (interior rows): −α ΣC q = 0.
        for (li, &g) in dofs.iter().enumerate() {
            if disc.interior_dof[g].is_some() {
                for j in 0..nq {
                    mat[(hat0 + g, oq + j)] += -alpha * disc.cmat[e][(li, j)];
                }
            }
        }
    }

    // Dirichlet rows: û_g = data.
    for (g, slot) in disc.interior_dof.iter().enumerate() {
        if slot.is_none() {
            mat[(hat0 + g, hat0 + g)] = 1.0;
            rhs[hat0 + g] = disc.uhat_bc[g];
        }
    }

    let sol = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("monolithic system is singular".into()))?;

    let mut q = Vec::with_capacity(ne);
    let mut u = Vec::with_capacity(ne);
    let mut psi = Vec::with_capacity(ne);
    for e in 0..ne {
        let oq = e * per_elem;
        q.push(sol.rows(oq, nq).into_owned());
        u.push(sol.rows(oq + nq, nu).into_owned());
        psi.push(sol.rows(oq + nq + nu, nu).into_owned());
    }
    let uhat = sol.rows(hat0, n_hat).iter().copied().collect();
    Ok(NewtonStep { q, u, psi, uhat })
}
