//! Unconstrained hybridized mixed (RT) solver: the same broken spaces and
//! facet coupling as the proximal solver, without bounds or latent variable.
//! Used as a reference for conservation and as the comparison baseline.

use nalgebra::{DMatrix, DVector};
use sprs::TriMat;

use super::{linear::SpdSolver, Discretization};
use crate::mesh::Mesh;
use crate::problems::ProblemSpec;
use crate::{Error, Result};

/// Solution of the unconstrained mixed problem.
pub struct BaselineSolution {
    pub q: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub uhat: Vec<f64>,
}

/// Solve −∇·(A∇u) = f, u = g on the boundary, by hybridized mixed FEM.
///
/// Per element the saddle system is
///   [ Mq  B̃ᵀ ] [q]   [ −Cᵀû ]
///   [ B̃   0  ] [u] = [ −f_v ],
/// and flux continuity ΣC q = 0 closes the facet unknowns.
pub fn baseline_mixed_solve(
    problem: &ProblemSpec,
    mesh: &Mesh,
    p: usize,
) -> Result<BaselineSolution> {
    let disc = Discretization::new(problem, mesh, p, 0.0, 0.0)?;
    baseline_mixed_solve_with(&disc, mesh)
}

/// As [`baseline_mixed_solve`], reusing a prebuilt [`Discretization`].
pub fn baseline_mixed_solve_with(
    disc: &Discretization,
    mesh: &Mesh,
) -> Result<BaselineSolution> {
    let ne = mesh.num_elements();
    let nq = disc.ctx.nq();
    let nu = disc.ctx.nu();
    let n_loc = nq + nu;

    struct Local {
        /// L⁻¹ C̄ᵀ (n_loc × facet dofs).
        x: DMatrix<f64>,
        /// L⁻¹ [0; −f_v].
        y: DVector<f64>,
        dofs: Vec<usize>,
    }
    let mut locals = Vec::with_capacity(ne);
    let mut tri = TriMat::new((disc.n_interior, disc.n_interior));
    let mut rhs = vec![0.0; disc.n_interior];
    // The condensed operator is definite; detect its sign from the first
    // diagonal entry and normalize to SPD.
    let mut sign = 0.0f64;

    for e in 0..ne {
        let mut l = DMatrix::zeros(n_loc, n_loc);
        l.view_mut((0, 0), (nq, nq)).copy_from(&disc.blocks[e].mq);
        l.view_mut((0, nq), (nq, nu))
            .copy_from(&disc.btilde[e].transpose());
        l.view_mut((nq, 0), (nu, nq)).copy_from(&disc.btilde[e]);
        let lu = l.lu();

        let dofs = disc.local_facet_dofs(mesh, e);
        let nd = dofs.len();
        // C̄ = [C 0]: facet coupling touches only the flux block.
        let mut cbar_t = DMatrix::zeros(n_loc, nd);
        cbar_t
            .view_mut((0, 0), (nq, nd))
            .copy_from(&disc.cmat[e].transpose());
        let x = lu
            .solve(&cbar_t)
            .ok_or_else(|| Error::Solver("singular element saddle system".into()))?;
        let mut b0 = DVector::zeros(n_loc);
        b0.rows_mut(nq, nu).copy_from(&(-&disc.fvec[e]));
        let y = lu
            .solve(&b0)
            .ok_or_else(|| Error::Solver("singular element saddle system".into()))?;

        // Local Schur complement C̄ L⁻¹ C̄ᵀ and right-hand side C̄ L⁻¹ b0.
        let s = &disc.cmat[e] * x.rows(0, nq);
        let cy = &disc.cmat[e] * y.rows(0, nq);
        if sign == 0.0 {
            for li in 0..nd {
                if s[(li, li)].abs() > 1e-14 {
                    sign = s[(li, li)].signum();
                    break;
                }
            }
        }
        for (li, &gi) in dofs.iter().enumerate() {
            let Some(ri) = disc.interior_dof[gi] else {
                continue;
            };
            rhs[ri] += cy[li];
            for (lj, &gj) in dofs.iter().enumerate() {
                match disc.interior_dof[gj] {
                    Some(rj) => tri.add_triplet(ri, rj, s[(li, lj)]),
                    None => rhs[ri] -= s[(li, lj)] * disc.uhat_bc[gj],
                }
            }
        }
        locals.push(Local { x, y, dofs });
    }
    if sign == 0.0 {
        sign = 1.0;
    }

    let mut uhat = disc.uhat_bc.clone();
    if disc.n_interior > 0 {
        let mut schur = tri.to_csr();
        let mut b = rhs;
        if sign < 0.0 {
            schur.map_inplace(|v| -v);
            for bi in &mut b {
                *bi = -*bi;
            }
        }
        let sol = SpdSolver::new().solve(&schur, &b)?;
        for (g, slot) in disc.interior_dof.iter().enumerate() {
            if let Some(i) = *slot {
                uhat[g] = sol[i];
            }
        }
    }

    let mut q = Vec::with_capacity(ne);
    let mut u = Vec::with_capacity(ne);
    for loc in &locals {
        let uhat_loc =
            DVector::from_iterator(loc.dofs.len(), loc.dofs.iter().map(|&g| uhat[g]));
        let qu = &loc.y - &loc.x * uhat_loc;
        q.push(qu.rows(0, nq).into_owned());
        u.push(qu.rows(nq, nu).into_owned());
    }
    Ok(BaselineSolution { q, u, uhat })
}
