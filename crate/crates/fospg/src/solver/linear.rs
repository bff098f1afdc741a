//! Sparse SPD linear solver: LDLᵀ factorization with reverse Cuthill–McKee
//! ordering and iterative refinement, with a Jacobi-preconditioned conjugate
//! gradient fallback.

use sprs::{CsMat, FillInReduction, SymmetryCheck};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-14;

/// Reusable SPD solver: keeps the symbolic factorization between solves with
/// the same sparsity pattern (every Newton iteration produces the same
/// pattern on a fixed mesh).
#[derive(Default)]
pub struct SpdSolver {
    ldl: Option<LdlNumeric<f64, usize>>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl SpdSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solve K x = b for symmetric positive definite K.
    pub fn solve(&mut self, mat: &CsMat<f64>, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(mat.rows(), mat.cols());
        assert_eq!(mat.rows(), b.len());
        check_symmetry(mat)?;

        let same_pattern = self.ldl.is_some()
            && self.indptr == mat.indptr().as_slice().unwrap_or(&[])
            && self.indices == mat.indices();
        if same_pattern {
            let ldl = self.ldl.as_mut().unwrap();
            if ldl.update(mat.view()).is_err() {
                self.ldl = None;
            }
        }
        if self.ldl.is_none() || !same_pattern {
            let ldl = Ldl::new()
                .check_symmetry(SymmetryCheck::DontCheckSymmetry)
                .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
                .numeric(mat.view())
                .map_err(|e| Error::Solver(format!("LDL factorization failed: {e}")))?;
            self.indptr = mat.indptr().as_slice().unwrap_or(&[]).to_vec();
            self.indices = mat.indices().to_vec();
            self.ldl = Some(ldl);
        }
        let ldl = self.ldl.as_ref().unwrap();
        if ldl.d().iter().any(|&d| d <= 0.0) {
            return Err(Error::Solver(
                "condensed matrix has a nonpositive pivot (not SPD; assembly error)".into(),
            ));
        }

        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = ldl.solve(b);
        // Iterative refinement against the factorization.
        for _ in 0..6 {
            let r = residual(mat, &x, b);
            if norm(&r) <= RESIDUAL_TOL * bnorm {
                return Ok(x);
            }
            let dx = ldl.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        if norm(&residual(mat, &x, b)) <= RESIDUAL_TOL * bnorm {
            return Ok(x);
        }
        // Fallback: Jacobi-preconditioned CG warm-started at the LDL solution.
        let x_cg = cg_jacobi(mat, b, &x, RESIDUAL_TOL, 20 * b.len());
        let better = if norm(&residual(mat, &x_cg, b)) < norm(&residual(mat, &x, b)) {
            x_cg
        } else {
            x
        };
        Ok(better)
    }
}

/// One-shot convenience wrapper.
pub fn spd_solve(mat: &CsMat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    SpdSolver::new().solve(mat, b)
}

fn check_symmetry(mat: &CsMat<f64>) -> Result<()> {
    let t = mat.transpose_view().to_csr();
    let mut max_abs = 0.0f64;
    for (&v, _) in mat.iter() {
        max_abs = max_abs.max(v.abs());
    }
    let diff = (mat - &t).map(|v| v.abs());
    let mut max_diff = 0.0f64;
    for (&v, _) in diff.iter() {
        max_diff = max_diff.max(v);
    }
    if max_diff > 1e-12 * max_abs.max(1e-300) {
        return Err(Error::Solver(format!(
            "matrix not symmetric: max|K - Kᵀ| = {max_diff:e}, max|K| = {max_abs:e}"
        )));
    }
    Ok(())
}

fn residual(mat: &CsMat<f64>, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    for (&v, (i, j)) in mat.iter() {
        r[i] -= v * x[j];
    }
    r
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn cg_jacobi(mat: &CsMat<f64>, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut diag = vec![0.0; n];
    for (&v, (i, j)) in mat.iter() {
        if i == j {
            diag[i] = v;
        }
    }
    let prec = |r: &[f64]| -> Vec<f64> {
        r.iter()
            .zip(&diag)
            .map(|(&ri, &di)| if di > 0.0 { ri / di } else { ri })
            .collect()
    };
    let matvec = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for (&v, (i, j)) in mat.iter() {
            y[i] += v * x[j];
        }
        y
    };
    let bnorm = norm(b);
    let mut x = x0.to_vec();
    let mut r = residual(mat, &x, b);
    let mut z = prec(&r);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        if norm(&r) <= tol * bnorm {
            break;
        }
        let ap = matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = prec(&r);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use sprs::TriMat;

    fn to_csr(n: usize, entries: &[(usize, usize, f64)]) -> CsMat<f64> {
        let mut t = TriMat::new((n, n));
        for &(i, j, v) in entries {
            t.add_triplet(i, j, v);
        }
        t.to_csr()
    }

    #[test]
    fn identity() {
        let mat = to_csr(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let x = spd_solve(&mat, &[3.0, -1.0, 2.0]).unwrap();
        assert_eq!(x, vec![3.0, -1.0, 2.0]);
    }

    #[test]
    fn tridiagonal_poisson() {
        let n = 10;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, 2.0));
            if i + 1 < n {
                entries.push((i, i + 1, -1.0));
                entries.push((i + 1, i, -1.0));
            }
        }
        let mat = to_csr(n, &entries);
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let x = spd_solve(&mat, &b).unwrap();
        // Dense reference.
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        for &(i, j, v) in &entries {
            dense[(i, j)] = v;
        }
        let xd = dense.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn random_spd() {
        let n = 50;
        // Deterministic pseudo-random A, K = AᵀA + I.
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| ((i * 31 + j * 17 + 1) as f64 * 0.73).sin());
        let k = a.transpose() * &a + nalgebra::DMatrix::identity(n, n);
        let mut t = TriMat::new((n, n));
        for i in 0..n {
            for j in 0..n {
                t.add_triplet(i, j, k[(i, j)]);
            }
        }
        let mat = t.to_csr();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let x = spd_solve(&mat, &b).unwrap();
        let r = residual(&mat, &x, &b);
        assert!(norm(&r) <= 1e-12 * norm(&b));
    }

    #[test]
    fn rejects_asymmetric() {
        let mat = to_csr(2, &[(0, 0, 1.0), (0, 1, 0.5), (1, 1, 1.0)]);
        assert!(spd_solve(&mat, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_indefinite() {
        let mat = to_csr(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(spd_solve(&mat, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn pattern_reuse() {
        let mut solver = SpdSolver::new();
        for scale in [1.0, 2.0, 5.0] {
            let mat = to_csr(3, &[(0, 0, scale), (1, 1, scale), (2, 2, scale)]);
            let x = solver.solve(&mat, &[scale, scale, scale]).unwrap();
            for xi in x {
                assert!((xi - 1.0).abs() < 1e-14);
            }
        }
    }
}
