//! Experiment runner plumbing: JSON run configuration, CSV and legacy-ASCII
//! VTK writers, and the subcommand implementations used by the binary.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ErrorRecord};
use crate::fem::assemble::{eval_flux, eval_scalar};
use crate::fem::FeContext;
use crate::latent::{upsilon, OperatorKind};
use crate::mesh::{ElementKind, Mesh};
use crate::oracle;
use crate::problems::ProblemSpec;
use crate::solver::{
    baseline_mixed_solve, fospg_solve, AlphaSchedule, FospgConfig, NewtonMode, ProximalState,
    RunReport,
};
use crate::{Error, Result};

fn default_p() -> usize {
    1
}
fn default_refinements() -> usize {
    3
}
fn default_tol() -> f64 {
    1e-8
}
fn default_newton() -> String {
    "adaptive".into()
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}
fn default_max_outer() -> usize {
    200
}
fn default_max_newton() -> usize {
    100
}

/// Complete, serializable description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// oblique-flow | vertical-faults | punctured | biactive | spherical.
    pub problem: String,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Mesh parameter: cells per side, or refinement count for the disk.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_refinements")]
    pub refinements: usize,
    /// fermi-dirac | algebraic | exp | softplus.
    #[serde(default)]
    pub operator: Option<String>,
    #[serde(default)]
    pub eps1: Option<f64>,
    #[serde(default)]
    pub eps2: Option<f64>,
    /// const:c | geom:a0,r.
    #[serde(default)]
    pub alpha: Option<String>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// single | fixed:t | adaptive.
    #[serde(default = "default_newton")]
    pub newton: String,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_true")]
    pub emit_csv: bool,
    #[serde(default = "default_true")]
    pub emit_vtk: bool,
    #[serde(default = "default_true")]
    pub emit_report: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("bad config {}: {e}", path.display())))
    }

    /// Resolve the problem description and solver configuration, validating
    /// every override.
    pub fn resolve(&self) -> Result<(ProblemSpec, FospgConfig)> {
        let mut problem = ProblemSpec::by_name(&self.problem)?;
        if let Some(op) = &self.operator {
            problem.operator = OperatorKind::parse(op).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown operator '{op}' (expected fermi-dirac | algebraic | exp | softplus)"
                ))
            })?;
        }
        if let Some(a) = &self.alpha {
            problem.alpha = AlphaSchedule::parse(a)?;
        }
        let mut config = FospgConfig::for_problem(&problem, self.p);
        if let Some(e1) = self.eps1 {
            if e1 < 0.0 {
                return Err(Error::InvalidArgument("eps1 must be nonnegative".into()));
            }
            config.eps1 = e1;
        }
        if let Some(e2) = self.eps2 {
            if e2 < 0.0 {
                return Err(Error::InvalidArgument("eps2 must be nonnegative".into()));
            }
            config.eps2 = e2;
        }
        config.tol = self.tol;
        config.max_outer = self.max_outer;
        config.max_newton = self.max_newton;
        config.newton = parse_newton(&self.newton)?;
        crate::fem::check_degree(problem.mesh.element_kind(), self.p)?;
        Ok((problem, config))
    }

    pub fn build_mesh(&self, problem: &ProblemSpec, level: usize) -> Result<Mesh> {
        match self.n {
            Some(n) => {
                let scaled = match problem.mesh {
                    crate::problems::MeshFamily::Disk { .. } => n + level,
                    _ => n << level,
                };
                problem.mesh.build_n(scaled)
            }
            None => problem.mesh.build(level),
        }
    }
}

pub fn parse_newton(s: &str) -> Result<NewtonMode> {
    match s {
        "single" => Ok(NewtonMode::SingleStep),
        "adaptive" => Ok(NewtonMode::Adaptive),
        _ => {
            if let Some(t) = s.strip_prefix("fixed:") {
                let t: f64 = t.parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad Newton tolerance in '{s}'"))
                })?;
                if t <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "Newton tolerance must be positive".into(),
                    ));
                }
                Ok(NewtonMode::Fixed(t))
            } else {
                Err(Error::InvalidArgument(format!(
                    "unknown Newton mode '{s}' (expected single | fixed:t | adaptive)"
                )))
            }
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| Error::Io(std::io::Error::other(format!("cannot create {}: {e}", dir.display()))))?;
    }
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::other(format!("cannot write {}: {e}", path.display()))))
}

/// Scalar and vector fields attached to a mesh for VTK output.
pub struct VtkFields<'a> {
    /// (name, per-element sample closure at a reference point).
    pub scalars: Vec<(&'a str, Box<dyn Fn(usize, [f64; 2]) -> f64 + 'a>)>,
    pub vectors: Vec<(&'a str, Box<dyn Fn(usize, [f64; 2]) -> [f64; 2] + 'a>)>,
    /// (name, one value per element) — always written as CELL_DATA.
    pub cell_scalars: Vec<(&'a str, Vec<f64>)>,
}

fn reference_vertices(kind: ElementKind) -> Vec<[f64; 2]> {
    match kind {
        ElementKind::Triangle => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        ElementKind::Rectangle => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    }
}

/// Write a legacy ASCII VTK unstructured grid.  Broken fields are emitted as
/// CELL_DATA (cell midpoint value) for p = 0 and vertex-averaged POINT_DATA
/// otherwise.
pub fn write_vtk(path: &Path, mesh: &Mesh, p: usize, fields: &VtkFields) -> Result<()> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(if p == 0 {
        "broken fields sampled as cell values\n"
    } else {
        "broken fields vertex-averaged across adjacent cells\n"
    });
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let nv = mesh.num_vertices();
    let ne = mesh.num_elements();
    s.push_str(&format!("POINTS {nv} double\n"));
    for v in &mesh.vertices {
        s.push_str(&format!("{} {} 0\n", fmt(v[0]), fmt(v[1])));
    }
    let per = mesh.kind.num_vertices();
    s.push_str(&format!("CELLS {ne} {}\n", ne * (per + 1)));
    for e in &mesh.elements {
        s.push_str(&per.to_string());
        for &v in &e.vertices {
            s.push_str(&format!(" {v}"));
        }
        s.push('\n');
    }
    s.push_str(&format!("CELL_TYPES {ne}\n"));
    let ctype = match mesh.kind {
        ElementKind::Triangle => 5,
        ElementKind::Rectangle => 9,
    };
    for _ in 0..ne {
        s.push_str(&format!("{ctype}\n"));
    }

    let centroid_ref = match mesh.kind {
        ElementKind::Triangle => [1.0 / 3.0, 1.0 / 3.0],
        ElementKind::Rectangle => [0.5, 0.5],
    };

    if p == 0 {
        s.push_str(&format!("CELL_DATA {ne}\n"));
        for (name, f) in &fields.scalars {
            s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for e in 0..ne {
                s.push_str(&fmt(f(e, centroid_ref)));
                s.push('\n');
            }
        }
        for (name, f) in &fields.vectors {
            s.push_str(&format!("VECTORS {name} double\n"));
            for e in 0..ne {
                let v = f(e, centroid_ref);
                s.push_str(&format!("{} {} 0\n", fmt(v[0]), fmt(v[1])));
            }
        }
        for (name, vals) in &fields.cell_scalars {
            s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for v in vals {
                s.push_str(&fmt(*v));
                s.push('\n');
            }
        }
    } else {
        // Vertex-averaged point data.
        let refv = reference_vertices(mesh.kind);
        let average = |f: &dyn Fn(usize, [f64; 2]) -> f64| -> Vec<f64> {
            let mut sums = vec![0.0; nv];
            let mut counts = vec![0usize; nv];
            for e in 0..ne {
                for (iv, &gv) in mesh.elements[e].vertices.iter().enumerate() {
                    sums[gv] += f(e, refv[iv]);
                    counts[gv] += 1;
                }
            }
            sums.iter()
                .zip(&counts)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect()
        };
        s.push_str(&format!("POINT_DATA {nv}\n"));
        for (name, f) in &fields.scalars {
            s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for v in average(f) {
                s.push_str(&fmt(v));
                s.push('\n');
            }
        }
        for (name, f) in &fields.vectors {
            let fx = average(&|e, pt| f(e, pt)[0]);
            let fy = average(&|e, pt| f(e, pt)[1]);
            s.push_str(&format!("VECTORS {name} double\n"));
            for (x, y) in fx.iter().zip(&fy) {
                s.push_str(&format!("{} {} 0\n", fmt(*x), fmt(*y)));
            }
        }
        if !fields.cell_scalars.is_empty() {
            s.push_str(&format!("CELL_DATA {ne}\n"));
            for (name, vals) in &fields.cell_scalars {
                s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
                for v in vals {
                    s.push_str(&fmt(*v));
                    s.push('\n');
                }
            }
        }
    }
    write_text(path, &s)
}

/// Write the converged state of one run: VTK fields and a JSON report.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport> {
    let (problem, config) = cfg.resolve()?;
    let mesh = cfg.build_mesh(&problem, 0)?;
    let (state, report) = fospg_solve(&problem, &mesh, &config)?;
    emit_run_outputs(cfg, &problem, &config, &mesh, &state, &report, "run")?;
    Ok(report)
}

fn emit_run_outputs(
    cfg: &RunConfig,
    problem: &ProblemSpec,
    config: &FospgConfig,
    mesh: &Mesh,
    state: &ProximalState,
    report: &RunReport,
    stem: &str,
) -> Result<()> {
    let ctx = FeContext::new(mesh.kind, config.p)?;
    if cfg.emit_vtk {
        let bounds = |x: [f64; 2]| problem.point_bounds(x);
        let (xi, _) = analysis::mass_indicator(mesh, &ctx, &state.q, &*problem.f);
        let fields = VtkFields {
            scalars: vec![
                (
                    "u",
                    Box::new(|e, pt| eval_scalar(&ctx, &state.u[e], pt)),
                ),
                (
                    "psi",
                    Box::new(|e, pt| eval_scalar(&ctx, &state.psi[e], pt)),
                ),
                (
                    "u_latent",
                    Box::new(|e, pt| {
                        let map = mesh.affine_map(e);
                        upsilon(
                            config.operator,
                            bounds(map.apply(pt)),
                            eval_scalar(&ctx, &state.psi[e], pt),
                        )
                    }),
                ),
            ],
            vectors: vec![(
                "q",
                Box::new(|e, pt| {
                    let map = mesh.affine_map(e);
                    eval_flux(&ctx, &map, &state.q[e], pt)
                }),
            )],
            cell_scalars: vec![("xi", xi)],
        };
        write_vtk(&cfg.out.join(format!("{stem}.vtk")), mesh, config.p, &fields)?;
    }
    if cfg.emit_report {
        let json = serde_json::to_string_pretty(report)
            .map_err(|e| Error::Io(std::io::Error::other(format!("report serialization failed: {e}"))))?;
        write_text(&cfg.out.join(format!("{stem}_report.json")), &json)?;
    }
    Ok(())
}

pub const CONVERGENCE_HEADER: &str = "h,err_u,rate_u,err_latent,rate_latent,err_flux,rate_flux";

/// Convergence study across `refinements` meshes; requires an exact solution.
pub fn cmd_convergence(cfg: &RunConfig) -> Result<Vec<ErrorRecord>> {
    let (problem, config) = cfg.resolve()?;
    let exact_u = problem.exact_u.clone().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "problem '{}' has no exact solution for a convergence study",
            problem.name
        ))
    })?;
    let exact_q = problem.exact_q.clone();
    let mut records = Vec::new();
    for level in 0..cfg.refinements.max(1) {
        let mesh = cfg.build_mesh(&problem, level)?;
        let ctx = FeContext::new(mesh.kind, config.p)?;
        let (state, _) = fospg_solve(&problem, &mesh, &config)?;
        let bounds = |x: [f64; 2]| problem.point_bounds(x);
        let qd = 2 * config.p + 6;
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
        let err_flux = match &exact_q {
            Some(qe) => analysis::flux_l2_error(&mesh, &ctx, &state.q, &**qe, qd),
            None => 0.0,
        };
        records.push(ErrorRecord {
            h: mesh.h(),
            dofs: mesh.num_facets() * ctx.nm(),
            err_u,
            err_latent,
            err_flux,
            rate_u: None,
            rate_latent: None,
            rate_flux: None,
        });
    }
    analysis::attach_rates(&mut records);
    if cfg.emit_csv {
        let mut csv = String::from(CONVERGENCE_HEADER);
        csv.push('\n');
        for r in &records {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt(r.h),
                fmt(r.err_u),
                fmt(r.rate_u.unwrap_or(0.0)),
                fmt(r.err_latent),
                fmt(r.rate_latent.unwrap_or(0.0)),
                fmt(r.err_flux),
                fmt(r.rate_flux.unwrap_or(0.0)),
            ));
        }
        write_text(&cfg.out.join("convergence.csv"), &csv)?;
    }
    Ok(records)
}

/// One row of the bound-comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub h: f64,
    pub baseline_min: f64,
    pub baseline_max: f64,
    pub baseline_xi_max: f64,
    pub fospg_min: f64,
    pub fospg_max: f64,
    pub fospg_xi_max: f64,
}

/// Baseline vs constrained min/max/conservation comparison per refinement.
pub fn cmd_table1(cfg: &RunConfig) -> Result<Vec<Table1Row>> {
    let (problem, config) = cfg.resolve()?;
    let mut rows = Vec::new();
    for level in 0..cfg.refinements.max(1) {
        let mesh = cfg.build_mesh(&problem, level)?;
        let ctx = FeContext::new(mesh.kind, config.p)?;
        let bounds = |x: [f64; 2]| problem.point_bounds(x);

        let base = baseline_mixed_solve(&problem, &mesh, config.p)?;
        let base_scan = analysis::dmp_scan(&mesh, &ctx, &base.u, &bounds, 10);
        let (_, base_xi) = analysis::mass_indicator(&mesh, &ctx, &base.q, &*problem.f);

        let (state, _) = fospg_solve(&problem, &mesh, &config)?;
        let scan =
            analysis::dmp_scan_latent(&mesh, &ctx, config.operator, &state.psi, &bounds, 10);
        let (_, xi) = analysis::mass_indicator(&mesh, &ctx, &state.q, &*problem.f);

        rows.push(Table1Row {
            h: mesh.h(),
            baseline_min: base_scan.min,
            baseline_max: base_scan.max,
            baseline_xi_max: base_xi,
            fospg_min: scan.min,
            fospg_max: scan.max,
            fospg_xi_max: xi,
        });
    }
    if cfg.emit_csv {
        let mut csv = String::from(
            "h,baseline_min,baseline_max,baseline_xi_max,fospg_min,fospg_max,fospg_xi_max\n",
        );
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt(r.h),
                fmt(r.baseline_min),
                fmt(r.baseline_max),
                fmt(r.baseline_xi_max),
                fmt(r.fospg_min),
                fmt(r.fospg_max),
                fmt(r.fospg_xi_max),
            ));
        }
        write_text(&cfg.out.join("table1.csv"), &csv)?;
    }
    Ok(rows)
}

/// One row of the inner-iteration comparison.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRow {
    pub mode: String,
    pub level: usize,
    pub h: f64,
    pub k: usize,
    pub alpha: f64,
    pub newton_iters: usize,
    pub linear_solves: usize,
    pub diff: f64,
    pub err_exact: f64,
}

/// Per-proximal-step linear-solve counts for the three inner-solve modes.
pub fn cmd_iterations(cfg: &RunConfig) -> Result<Vec<IterationRow>> {
    let (problem, base_config) = cfg.resolve()?;
    let modes: [(&str, NewtonMode); 3] = [
        ("single", NewtonMode::SingleStep),
        ("fixed", NewtonMode::Fixed(1e-10)),
        ("adaptive", NewtonMode::Adaptive),
    ];
    let mut rows = Vec::new();
    for level in 0..cfg.refinements.max(1) {
        let mesh = cfg.build_mesh(&problem, level)?;
        for (name, mode) in &modes {
            let mut config = base_config.clone();
            config.newton = *mode;
            let (_, report) = fospg_solve(&problem, &mesh, &config)?;
            for r in &report.rows {
                rows.push(IterationRow {
                    mode: name.to_string(),
                    level,
                    h: mesh.h(),
                    k: r.k,
                    alpha: r.alpha,
                    newton_iters: r.newton_iters,
                    linear_solves: r.linear_solves,
                    diff: r.diff,
                    err_exact: r.err_exact.unwrap_or(0.0),
                });
            }
        }
    }
    if cfg.emit_csv {
        let mut csv =
            String::from("mode,level,h,k,alpha,newton_iters,linear_solves,diff,err_exact\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.mode,
                r.level,
                fmt(r.h),
                r.k,
                fmt(r.alpha),
                r.newton_iters,
                r.linear_solves,
                fmt(r.diff),
                fmt(r.err_exact),
            ));
        }
        write_text(&cfg.out.join("iterations.csv"), &csv)?;
    }
    Ok(rows)
}

/// Outcome of the independent-oracle cross-check at p = 0.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub max_u_gap: f64,
    pub kkt_residual: f64,
    pub oracle_iterations: usize,
}

/// Cross-check the converged solution against the projected-gradient oracle.
pub fn cmd_oracle_check(cfg: &RunConfig) -> Result<OracleCheck> {
    let (problem, mut config) = cfg.resolve()?;
    if cfg.p != 0 {
        return Err(Error::InvalidArgument(
            "the oracle runs at p = 0 only".into(),
        ));
    }
    config.p = 0;
    let mesh = cfg.build_mesh(&problem, 0)?;
    let (state, _) = fospg_solve(&problem, &mesh, &config)?;
    let u_avg: Vec<f64> = state.u.iter().map(|u| u[0]).collect();

    let vi = oracle::BoxVI::new(&problem, &mesh)?;
    let sol = oracle::solve_vi_projected_gradient(&vi, &mesh, None, 1e-10, 200_000)?;
    let max_u_gap = u_avg
        .iter()
        .zip(&sol.u)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let check = OracleCheck {
        max_u_gap,
        kkt_residual: oracle::kkt_residual(&vi, &mesh, &sol.u, &sol.q),
        oracle_iterations: sol.iterations,
    };
    if cfg.emit_report {
        let json = serde_json::to_string_pretty(&check)
            .map_err(|e| Error::Io(std::io::Error::other(format!("report serialization failed: {e}"))))?;
        write_text(&cfg.out.join("oracle_check.json"), &json)?;
    }
    Ok(check)
}

/// Convenience: print a line to stderr without panicking on broken pipes.
pub fn eprintln_soft(msg: &str) {
    let _ = writeln!(std::io::stderr(), "{msg}");
}

/// Latent primal values per element, sampled at reference points (helper for
/// consumers that need U(ψ_h) as broken coefficients on the nodal basis).
pub fn latent_nodal_values(
    mesh: &Mesh,
    ctx: &FeContext,
    problem: &ProblemSpec,
    operator: OperatorKind,
    psi: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let nodes = ctx.scalar.nodes.clone();
    psi.iter()
        .enumerate()
        .map(|(e, psi_e)| {
            let map = mesh.affine_map(e);
            DVector::from_iterator(
                nodes.len(),
                nodes.iter().map(|&n| {
                    upsilon(
                        operator,
                        problem.point_bounds(map.apply(n)),
                        eval_scalar(ctx, psi_e, n),
                    )
                }),
            )
        })
        .collect()
}
