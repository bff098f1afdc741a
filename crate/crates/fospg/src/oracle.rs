//! Independent reference solver for the lowest-order bound-constrained mixed
//! problem, posed as minimization of
//!   J(v) = ½(A⁻¹L(v), L(v)) − (f, v) − ⟨g, L(v)·n⟩
//! over the per-cell box of feasible piecewise constants, by projected
//! gradient descent with Armijo backtracking.  Used as ground truth for the
//! proximal solver; runs on tiny meshes only.

use nalgebra::DVector;

use crate::fem::lifting::LiftingOperator;
use crate::fem::FeContext;
use crate::mesh::Mesh;
use crate::problems::ProblemSpec;
use crate::{Error, Result};

/// Lowest-order box-constrained mixed variational inequality.
pub struct BoxVI {
    pub ctx: FeContext,
    pub lift: LiftingOperator,
    /// Per-cell bounds evaluated at the centroid.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// (f, 1)_T per cell.
    pub fint: Vec<f64>,
    /// L_Γ(g) in global div-conforming coefficients.
    pub qg: DVector<f64>,
    /// ∫_T ∇·L_Γ(g) per cell.
    pub div_qg: Vec<f64>,
}

impl BoxVI {
    pub fn new(problem: &ProblemSpec, mesh: &Mesh) -> Result<Self> {
        let ctx = FeContext::new(mesh.kind, 0)?;
        let a = problem.a.clone();
        let lift = LiftingOperator::new(mesh, &ctx, &move |x, r| a(x, r))?;
        let ne = mesh.num_elements();
        let mut lo = Vec::with_capacity(ne);
        let mut hi = Vec::with_capacity(ne);
        let mut fint = Vec::with_capacity(ne);
        let tab = FeContext::new(mesh.kind, 2)?.interior; // oversampled f rule
        for e in 0..ne {
            let b = problem.point_bounds(mesh.element_centroid(e));
            if !(b.lo <= b.hi) {
                return Err(Error::InvalidArgument(format!(
                    "bounds not ordered on cell {e}"
                )));
            }
            lo.push(b.lo);
            hi.push(b.hi);
            let map = mesh.affine_map(e);
            let mut fi = 0.0;
            for (k, &w) in tab.rule.weights.iter().enumerate() {
                fi += w * map.det * (problem.f)(map.apply(tab.rule.points[k]));
            }
            fint.push(fi);
        }
        let g = problem.g.clone();
        let qg = lift.lift_boundary(mesh, &ctx, &move |x, m| g(x, m));
        let div_qg = cell_divergence(mesh, &ctx, &lift, &qg);
        Ok(BoxVI {
            ctx,
            lift,
            lo,
            hi,
            fint,
            qg,
            div_qg,
        })
    }

    fn project(&self, v: &mut [f64]) {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = vi.clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Objective value at cell values `v` (exercised by the monotonicity
    /// tests; the solver itself compares quadratic-model decrements).
    #[cfg_attr(not(test), allow(dead_code))]
    fn objective(&self, mesh: &Mesh, v: &[f64], div_qv: &[f64]) -> f64 {
        // ½(A⁻¹L(v),L(v)) = ½(v, ∇·L(v)); ⟨g, L(v)·n⟩ = −(v, ∇·L_Γ(g)).
        let mut j = 0.0;
        for e in 0..mesh.num_elements() {
            j += 0.5 * v[e] * div_qv[e] - self.fint[e] * v[e] + v[e] * self.div_qg[e];
        }
        j
    }

    /// Gradient per cell: g_T = ∫_T (∇·(L(v) + L_Γ(g)) − f).
    fn gradient(&self, mesh: &Mesh, div_qv: &[f64]) -> Vec<f64> {
        (0..mesh.num_elements())
            .map(|e| div_qv[e] + self.div_qg[e] - self.fint[e])
            .collect()
    }

    fn lift_values(&self, mesh: &Mesh, v: &[f64]) -> DVector<f64> {
        let broken: Vec<DVector<f64>> =
            v.iter().map(|&c| DVector::from_vec(vec![c])).collect();
        self.lift.lift_scalar(mesh, &self.ctx, &broken)
    }
}

fn cell_divergence(
    mesh: &Mesh,
    ctx: &FeContext,
    lift: &LiftingOperator,
    q: &DVector<f64>,
) -> Vec<f64> {
    let broken = lift.to_broken(q);
    let tab = &ctx.interior;
    (0..mesh.num_elements())
        .map(|e| {
            let mut acc = 0.0;
            for (k, &w) in tab.rule.weights.iter().enumerate() {
                let divhat: f64 = tab.rt_divs[k]
                    .iter()
                    .zip(broken[e].iter())
                    .map(|(d, c)| d * c)
                    .sum();
                acc += w * divhat; // det cancels against the Piola scaling
            }
            acc
        })
        .collect()
}

/// Oracle solution: cell values and the full flux q* = L(u*) + L_Γ(g) in
/// broken RT coefficients.
pub struct ViSolution {
    pub u: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub iterations: usize,
    pub final_pg_norm: f64,
}

/// Projected-gradient solve with Armijo backtracking (c = 1e-4, halving).
/// Terminates when the projected-gradient norm drops below `gtol`.
pub fn solve_vi_projected_gradient(
    vi: &BoxVI,
    mesh: &Mesh,
    start: Option<Vec<f64>>,
    gtol: f64,
    max_iter: usize,
) -> Result<ViSolution> {
    let ne = mesh.num_elements();
    let mut v = start.unwrap_or_else(|| vec![0.0; ne]);
    assert_eq!(v.len(), ne);
    vi.project(&mut v);

    let qv = vi.lift_values(mesh, &v);
    let mut div_qv = cell_divergence(mesh, &vi.ctx, &vi.lift, &qv);
    let mut step = 1.0;
    let c_armijo = 1e-4;
    let mut pg_norm = f64::INFINITY;

    for it in 0..max_iter {
        let grad = vi.gradient(mesh, &div_qv);
        // Projected-gradient map with unit step.
        let mut probe: Vec<f64> = v.iter().zip(&grad).map(|(a, g)| a - g).collect();
        vi.project(&mut probe);
        pg_norm = v
            .iter()
            .zip(&probe)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if pg_norm < gtol {
            let q_full = vi.lift_values(mesh, &v) + &vi.qg;
            return Ok(ViSolution {
                u: v,
                q: vi.lift.to_broken(&q_full),
                iterations: it,
                final_pg_norm: pg_norm,
            });
        }

        // Backtracking line search on the projected arc.  The objective is
        // quadratic, so the decrease of a trial move d is evaluated exactly
        // as ΔJ = gᵀd + ½ dᵀHd (Hd via one lifting solve); this avoids the
        // catastrophic cancellation of comparing nearly equal J values near
        // the optimum.
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> =
                v.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            vi.project(&mut trial);
            let d: Vec<f64> = trial.iter().zip(&v).map(|(b, a)| b - a).collect();
            let qd = vi.lift_values(mesh, &d);
            let hd = cell_divergence(mesh, &vi.ctx, &vi.lift, &qd);
            let gtd: f64 = grad.iter().zip(&d).map(|(g, di)| g * di).sum();
            let dthd: f64 = hd.iter().zip(&d).map(|(h, di)| h * di).sum();
            let delta_j = gtd + 0.5 * dthd;
            if delta_j <= c_armijo * gtd {
                v = trial;
                for (dq, h) in div_qv.iter_mut().zip(&hd) {
                    *dq += h;
                }
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Stagnation at roundoff level: report with the final residual.
            break;
        }
    }
    if pg_norm < gtol {
        let q_full = vi.lift_values(mesh, &v) + &vi.qg;
        return Ok(ViSolution {
            u: v,
            q: vi.lift.to_broken(&q_full),
            iterations: max_iter,
            final_pg_norm: pg_norm,
        });
    }
    Err(Error::Solver(format!(
        "projected gradient did not converge: projected-gradient norm {pg_norm:e} ≥ {gtol:e}"
    )))
}

/// Stationarity/complementarity measure of a candidate pair: max over cells
/// of min(distance of u to its bounds, |cell multiplier ∫(∇·q − f)|) plus the
/// flux-equation residual |(A⁻¹q, r) − (u, ∇·r) + ⟨g, r·n⟩| over the
/// div-conforming basis.
pub fn kkt_residual(vi: &BoxVI, mesh: &Mesh, u: &[f64], q: &[DVector<f64>]) -> f64 {
    // Complementarity part.
    let tab = &vi.ctx.interior;
    let mut comp = 0.0f64;
    for e in 0..mesh.num_elements() {
        let mut div_int = 0.0;
        for (k, &w) in tab.rule.weights.iter().enumerate() {
            let divhat: f64 = tab.rt_divs[k]
                .iter()
                .zip(q[e].iter())
                .map(|(d, c)| d * c)
                .sum();
            div_int += w * divhat;
        }
        let lambda = div_int - vi.fint[e];
        let dist = (u[e] - vi.lo[e]).abs().min((vi.hi[e] - u[e]).abs());
        comp = comp.max(dist.min(lambda.abs()));
    }

    // Flux equation residual: q must equal L(u) + L_Γ(g).
    let qu = vi.lift_values(mesh, u);
    let q_expected = vi.lift.to_broken(&(&qu + &vi.qg));
    let mut flux_res = 0.0f64;
    for e in 0..mesh.num_elements() {
        flux_res = flux_res.max((&q[e] - &q_expected[e]).amax());
    }
    comp + flux_res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Bound, MeshFamily};
    use crate::solver::{baseline_mixed_solve, AlphaSchedule};
    use crate::latent::OperatorKind;
    use crate::mesh::unit_square_triangles;
    use std::sync::Arc;

    fn problem(lo: f64, hi: f64, f: f64) -> ProblemSpec {
        ProblemSpec {
            name: "oracle-test",
            mesh: MeshFamily::SquareTriangles {
                base: 2,
                lo: 0.0,
                hi: 1.0,
            },
            a: Arc::new(|_x, _r| [[1.0, 0.0], [0.0, 1.0]]),
            f: Arc::new(move |_x| f),
            g: Arc::new(|_x, _m| 0.0),
            lower: Bound::Const(lo),
            upper: Bound::Const(hi),
            operator: OperatorKind::FermiDirac,
            alpha: AlphaSchedule::Constant(1.0),
            exact_u: None,
            exact_q: None,
        }
    }

    #[test]
    fn trivial_zero_problem() {
        let p = problem(0.0, 1.0, 0.0);
        let mesh = unit_square_triangles(2).unwrap();
        let vi = BoxVI::new(&p, &mesh).unwrap();
        let sol = solve_vi_projected_gradient(&vi, &mesh, None, 1e-12, 1000).unwrap();
        for &u in &sol.u {
            assert!(u.abs() < 1e-10);
        }
        for qe in &sol.q {
            assert!(qe.amax() < 1e-10);
        }
    }

    #[test]
    fn inactive_box_matches_baseline() {
        let p = problem(-1e6, 1e6, 4.0);
        let mesh = unit_square_triangles(2).unwrap();
        let vi = BoxVI::new(&p, &mesh).unwrap();
        let sol = solve_vi_projected_gradient(&vi, &mesh, None, 1e-11, 50_000).unwrap();
        let base = baseline_mixed_solve(&p, &mesh, 0).unwrap();
        for e in 0..mesh.num_elements() {
            assert!(
                (sol.u[e] - base.u[e][0]).abs() < 1e-8,
                "cell {e}: {} vs {}",
                sol.u[e],
                base.u[e][0]
            );
        }
    }

    #[test]
    fn obstacle_complementarity() {
        let p = problem(0.0, 1e6, 4.0);
        let mesh = unit_square_triangles(2).unwrap();
        let vi = BoxVI::new(&p, &mesh).unwrap();
        let sol = solve_vi_projected_gradient(&vi, &mesh, None, 1e-11, 50_000).unwrap();
        let tab = &vi.ctx.interior;
        for e in 0..mesh.num_elements() {
            let mut div_int = 0.0;
            for (k, &w) in tab.rule.weights.iter().enumerate() {
                let divhat: f64 = tab.rt_divs[k]
                    .iter()
                    .zip(sol.q[e].iter())
                    .map(|(d, c)| d * c)
                    .sum();
                div_int += w * divhat;
            }
            let at_bound = (sol.u[e] - vi.lo[e]).abs() < 1e-9 || (vi.hi[e] - sol.u[e]).abs() < 1e-9;
            let conserved = (div_int - vi.fint[e]).abs() < 1e-8;
            assert!(at_bound || conserved, "cell {e} violates complementarity");
        }
        assert!(kkt_residual(&vi, &mesh, &sol.u, &sol.q) < 1e-8);
    }

    #[test]
    fn kkt_sensitivity_to_perturbation() {
        // Active lower bound everywhere: strong negative load.
        let p = problem(0.0, 1e6, -10.0);
        let mesh = unit_square_triangles(2).unwrap();
        let vi = BoxVI::new(&p, &mesh).unwrap();
        let sol = solve_vi_projected_gradient(&vi, &mesh, None, 1e-11, 50_000).unwrap();
        let base = kkt_residual(&vi, &mesh, &sol.u, &sol.q);
        assert!(base < 1e-8);
        // Perturb one active cell value.
        let active = (0..mesh.num_elements())
            .find(|&e| (sol.u[e] - vi.lo[e]).abs() < 1e-9)
            .expect("some cell must touch the bound");
        let mut u_pert = sol.u.clone();
        u_pert[active] += 1e-3;
        assert!(kkt_residual(&vi, &mesh, &u_pert, &sol.q) >= 1e-4);
    }

    #[test]
    fn uniqueness_from_random_starts() {
        let p = problem(0.0, 0.05, 4.0);
        let mesh = unit_square_triangles(2).unwrap();
        let vi = BoxVI::new(&p, &mesh).unwrap();
        let ne = mesh.num_elements();
        let start_a: Vec<f64> = (0..ne).map(|i| 0.05 * ((i as f64 * 0.9).sin().abs())).collect();
        let start_b: Vec<f64> = (0..ne).map(|i| 0.05 * ((i as f64 * 2.3).cos().abs())).collect();
        let sa = solve_vi_projected_gradient(&vi, &mesh, Some(start_a), 1e-11, 50_000).unwrap();
        let sb = solve_vi_projected_gradient(&vi, &mesh, Some(start_b), 1e-11, 50_000).unwrap();
        for e in 0..ne {
            assert!((sa.u[e] - sb.u[e]).abs() < 1e-7);
        }
    }

    #[test]
    fn objective_decreases_monotonically() {
        // Re-run the solver manually tracking J.
        let p = problem(0.0, 1e6, 4.0);
        let mesh = unit_square_triangles(2).unwrap();
        let vi = BoxVI::new(&p, &mesh).unwrap();
        // Track J along a short run by chaining restarts of length 1.
        let mut v = vec![0.0; mesh.num_elements()];
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let qv = vi.lift_values(&mesh, &v);
            let div_qv = cell_divergence(&mesh, &vi.ctx, &vi.lift, &qv);
            let j = vi.objective(&mesh, &v, &div_qv);
            assert!(j <= last + 1e-12, "objective increased: {j} > {last}");
            last = j;
            let sol = solve_vi_projected_gradient(&vi, &mesh, Some(v.clone()), 1e-14, 1)
                .err()
                .map(|_| ());
            let _ = sol;
            // One projected step with backtracking replicated inline.
            let grad = vi.gradient(&mesh, &div_qv);
            let mut step = 1.0;
            loop {
                let mut trial: Vec<f64> =
                    v.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
                vi.project(&mut trial);
                let qt = vi.lift_values(&mesh, &trial);
                let dt = cell_divergence(&mesh, &vi.ctx, &vi.lift, &qt);
                let jt = vi.objective(&mesh, &trial, &dt);
                let dec: f64 = grad
                    .iter()
                    .zip(v.iter().zip(&trial))
                    .map(|(g, (a, b))| g * (b - a))
                    .sum();
                if jt <= j + 1e-4 * dec || step < 1e-12 {
                    v = trial;
                    break;
                }
                step *= 0.5;
            }
        }
    }
}
