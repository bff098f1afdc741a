//! Python bindings for the fospg solver.
//!
//! Exposes the benchmark problems, the proximal solver, convergence studies,
//! and the superposition-operator family as a `fospg_py` extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fospg::analysis;
use fospg::fem::FeContext;
use fospg::latent::{self, OperatorKind, PointBounds};
use fospg::mesh::Mesh;
use fospg::problems::ProblemSpec;
use fospg::solver::{self, AlphaSchedule, FospgConfig};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn build_mesh(problem: &ProblemSpec, n: Option<usize>, level: usize) -> PyResult<Mesh> {
    match n {
        Some(n) => problem.mesh.build_n(n).map_err(err),
        None => problem.mesh.build(level).map_err(err),
    }
}

fn build_config(
    problem: &ProblemSpec,
    p: usize,
    tol: Option<f64>,
    alpha: Option<&str>,
    newton: Option<&str>,
    max_outer: Option<usize>,
    eps1: Option<f64>,
    eps2: Option<f64>,
) -> PyResult<(ProblemSpec, FospgConfig)> {
    let mut problem = problem.clone();
    if let Some(a) = alpha {
        problem.alpha = AlphaSchedule::parse(a).map_err(err)?;
    }
    let mut config = FospgConfig::for_problem(&problem, p);
    if let Some(t) = tol {
        config.tol = t;
    }
    if let Some(nw) = newton {
        config.newton = fospg::io::parse_newton(nw).map_err(err)?;
    }
    if let Some(m) = max_outer {
        config.max_outer = m;
    }
    if let Some(e) = eps1 {
        config.eps1 = e;
    }
    if let Some(e) = eps2 {
        config.eps2 = e;
    }
    Ok((problem, config))
}

/// Result of one proximal solve.
#[pyclass(get_all)]
struct SolveResult {
    converged: bool,
    outer: usize,
    linear_solves: usize,
    final_diff: f64,
    /// Mesh size.
    h: f64,
    /// L² error of u_h against the exact solution, when one is known.
    err_u: Option<f64>,
    /// L² error of the bound-mapped latent field, when known.
    err_latent: Option<f64>,
    /// L² error of the flux, when known.
    err_flux: Option<f64>,
    /// Extremes of the bound-mapped latent field over quadrature points.
    min_value: f64,
    max_value: f64,
    /// max_T |(div q_h - f, 1)_T|.
    mass_defect: f64,
    /// Per-element cell averages of u_h.
    u_means: Vec<f64>,
}

/// Solve one benchmark problem.
#[pyfunction]
#[pyo3(signature = (problem, p=0, n=None, level=0, tol=None, alpha=None, newton=None, max_outer=None, eps1=None, eps2=None))]
#[allow(clippy::too_many_arguments)]
fn solve(
    problem: &str,
    p: usize,
    n: Option<usize>,
    level: usize,
    tol: Option<f64>,
    alpha: Option<&str>,
    newton: Option<&str>,
    max_outer: Option<usize>,
    eps1: Option<f64>,
    eps2: Option<f64>,
) -> PyResult<SolveResult> {
    let spec = ProblemSpec::by_name(problem).map_err(err)?;
    let (problem, config) = build_config(&spec, p, tol, alpha, newton, max_outer, eps1, eps2)?;
    let mesh = build_mesh(&problem, n, level)?;
    let ctx = FeContext::new(mesh.kind, p).map_err(err)?;
    let (state, report) = solver::fospg_solve(&problem, &mesh, &config).map_err(err)?;

    let disc =
        solver::Discretization::new(&problem, &mesh, config.p, config.eps1, config.eps2)
            .map_err(err)?;
    let (min_value, max_value) = solver::bound_value_range(&disc, config.operator, &state.psi);
    let mass_defect = solver::mass_defect_max(&disc, &state.q);

    let bounds = |x: [f64; 2]| problem.point_bounds(x);
    let qd = 2 * p + 6;
    let err_u = problem
        .exact_u
        .as_ref()
        .map(|ex| analysis::l2_error(&mesh, &ctx, &state.u, &**ex, qd));
    let err_latent = problem.exact_u.as_ref().map(|ex| {
        analysis::latent_l2_error(&mesh, &ctx, config.operator, &bounds, &state.psi, &**ex, qd)
    });
    let err_flux = problem
        .exact_q
        .as_ref()
        .map(|ex| analysis::flux_l2_error(&mesh, &ctx, &state.q, &**ex, qd));

    let tab = &ctx.interior;
    let area: f64 = tab.rule.weights.iter().sum();
    let u_means = (0..mesh.num_elements())
        .map(|e| {
            let mut acc = 0.0;
            for (k, &w) in tab.rule.weights.iter().enumerate() {
                let v: f64 = tab.sc_vals[k]
                    .iter()
                    .zip(state.u[e].iter())
                    .map(|(v, c)| v * c)
                    .sum();
                acc += w * v;
            }
            acc / area
        })
        .collect();

    Ok(SolveResult {
        converged: report.converged,
        outer: report.total_outer,
        linear_solves: report.total_linear_solves,
        final_diff: report.final_diff,
        h: mesh.h(),
        err_u,
        err_latent,
        err_flux,
        min_value,
        max_value,
        mass_defect,
        u_means,
    })
}

/// Refinement study against the exact solution; returns one dict per level.
#[pyfunction]
#[pyo3(signature = (problem, p=0, refinements=3, tol=None, alpha=None))]
fn convergence(
    py: Python<'_>,
    problem: &str,
    p: usize,
    refinements: usize,
    tol: Option<f64>,
    alpha: Option<&str>,
) -> PyResult<Vec<Py<PyDict>>> {
    let spec = ProblemSpec::by_name(problem).map_err(err)?;
    let (problem, config) = build_config(&spec, p, tol, alpha, None, None, None, None)?;
    let exact_u = problem
        .exact_u
        .clone()
        .ok_or_else(|| PyValueError::new_err("problem has no exact solution"))?;
    let exact_q = problem.exact_q.clone();

    let mut rows = Vec::new();
    let mut prev: Option<(f64, f64, f64, f64)> = None;
    for level in 0..refinements.max(1) {
        let mesh = build_mesh(&problem, None, level)?;
        let ctx = FeContext::new(mesh.kind, p).map_err(err)?;
        let (state, _) = solver::fospg_solve(&problem, &mesh, &config).map_err(err)?;
        let bounds = |x: [f64; 2]| problem.point_bounds(x);
        let qd = 2 * p + 6;
        let h = mesh.h();
        let err_u = analysis::l2_error(&mesh, &ctx, &state.u, &*exact_u, qd);
        let err_latent = analysis::latent_l2_error(
            &mesh,
            &ctx,
            config.operator,
            &bounds,
            &state.psi,
            &*exact_u,
            qd,
        );
        let err_flux = exact_q
            .as_ref()
            .map(|ex| analysis::flux_l2_error(&mesh, &ctx, &state.q, &**ex, qd))
            .unwrap_or(0.0);

        let d = PyDict::new_bound(py);
        d.set_item("h", h)?;
        d.set_item("err_u", err_u)?;
        d.set_item("err_latent", err_latent)?;
        d.set_item("err_flux", err_flux)?;
        if let Some((hp, eu, el, ef)) = prev {
            let r = |e0: f64, e1: f64| (e0 / e1).ln() / (hp / h).ln();
            d.set_item("rate_u", r(eu, err_u))?;
            d.set_item("rate_latent", r(el, err_latent))?;
            d.set_item("rate_flux", r(ef, err_flux))?;
        }
        prev = Some((h, err_u, err_latent, err_flux));
        rows.push(d.into());
    }
    Ok(rows)
}

/// Names of the built-in benchmark problems.
#[pyfunction]
fn list_problems() -> Vec<&'static str> {
    vec![
        "oblique-flow",
        "vertical-faults",
        "punctured",
        "biactive",
        "spherical",
    ]
}

fn parse_op(kind: &str) -> PyResult<OperatorKind> {
    OperatorKind::parse(kind)
        .ok_or_else(|| PyValueError::new_err(format!("unknown operator family '{kind}'")))
}

/// Superposition operator value U(z) for bounds (lo, hi).
#[pyfunction]
fn upsilon(kind: &str, lo: f64, hi: f64, z: f64) -> PyResult<f64> {
    Ok(latent::upsilon(parse_op(kind)?, PointBounds { lo, hi }, z))
}

/// Derivative U'(z).
#[pyfunction]
fn upsilon_prime(kind: &str, lo: f64, hi: f64, z: f64) -> PyResult<f64> {
    Ok(latent::upsilon_prime(parse_op(kind)?, PointBounds { lo, hi }, z))
}

/// Inverse: the z with U(z) = y, for y strictly between the bounds.
#[pyfunction]
fn upsilon_inverse(kind: &str, lo: f64, hi: f64, y: f64) -> PyResult<f64> {
    if !(lo < y && y < hi) && !(y > lo && hi.is_infinite()) {
        return Err(PyValueError::new_err(
            "value must lie strictly inside the bounds",
        ));
    }
    Ok(latent::upsilon_inverse(parse_op(kind)?, PointBounds { lo, hi }, y))
}

#[pymodule]
fn fospg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(list_problems, m)?)?;
    m.add_function(wrap_pyfunction!(upsilon, m)?)?;
    m.add_function(wrap_pyfunction!(upsilon_prime, m)?)?;
    m.add_function(wrap_pyfunction!(upsilon_inverse, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
