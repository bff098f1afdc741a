//! Command-line experiment runner: solves the benchmark problems and emits
//! CSV, VTK, and JSON artifacts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fospg::io::{self, RunConfig};
use fospg::Error;

#[derive(Parser)]
#[command(
    name = "fospg",
    about = "Hybridized proximal Galerkin solver for bound-constrained elliptic problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON configuration file; flags override its keys one-to-one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem: oblique-flow | vertical-faults | punctured | biactive | spherical.
    #[arg(long)]
    problem: Option<String>,
    /// Polynomial degree.
    #[arg(long)]
    p: Option<usize>,
    /// Mesh parameter (cells per side; refinement count for the disk).
    #[arg(long)]
    n: Option<usize>,
    /// Number of meshes in refinement sweeps.
    #[arg(long)]
    refinements: Option<usize>,
    /// Operator: fermi-dirac | algebraic | exp | softplus.
    #[arg(long)]
    operator: Option<String>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    /// Step schedule: const:c | geom:a0,r.
    #[arg(long)]
    alpha: Option<String>,
    /// Outer stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Inner solve mode: single | fixed:t | adaptive.
    #[arg(long)]
    newton: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized property commands.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and write fields (VTK) plus a JSON report.
    Run(CommonOpts),
    /// Refinement sweep with L² errors and observed rates (CSV).
    Convergence(CommonOpts),
    /// Baseline-vs-constrained min/max and conservation table (CSV).
    Table1(CommonOpts),
    /// Per-step linear-solve counts for the three inner-solve modes (CSV).
    Iterations(CommonOpts),
    /// Cross-check the p = 0 solution against the projected-gradient oracle.
    OracleCheck(CommonOpts),
}

fn build_config(opts: &CommonOpts) -> Result<RunConfig, Error> {
    let mut cfg = match &opts.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => {
            let problem = opts.problem.clone().ok_or_else(|| {
                Error::InvalidArgument("either --config or --problem is required".into())
            })?;
            RunConfig {
                problem,
                p: 1,
                n: None,
                refinements: 3,
                operator: None,
                eps1: None,
                eps2: None,
                alpha: None,
                tol: 1e-8,
                newton: "adaptive".into(),
                max_outer: 200,
                max_newton: 100,
                out: PathBuf::from("out"),
                emit_csv: true,
                emit_vtk: true,
                emit_report: true,
                seed: None,
            }
        }
    };
    if let Some(v) = &opts.problem {
        cfg.problem = v.clone();
    }
    if let Some(v) = opts.p {
        cfg.p = v;
    }
    if let Some(v) = opts.n {
        cfg.n = Some(v);
    }
    if let Some(v) = opts.refinements {
        cfg.refinements = v;
    }
    if let Some(v) = &opts.operator {
        cfg.operator = Some(v.clone());
    }
    if let Some(v) = opts.eps1 {
        cfg.eps1 = Some(v);
    }
    if let Some(v) = opts.eps2 {
        cfg.eps2 = Some(v);
    }
    if let Some(v) = &opts.alpha {
        cfg.alpha = Some(v.clone());
    }
    if let Some(v) = opts.tol {
        cfg.tol = v;
    }
    if let Some(v) = &opts.newton {
        cfg.newton = v.clone();
    }
    if let Some(v) = &opts.out {
        cfg.out = v.clone();
    }
    if let Some(v) = opts.seed {
        cfg.seed = Some(v);
    }
    // Validate everything up front so config errors exit with code 2.
    cfg.resolve()?;
    Ok(cfg)
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::InvalidArgument(_) | Error::Unsupported(_) => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = match &cli.command {
        Command::Run(o)
        | Command::Convergence(o)
        | Command::Table1(o)
        | Command::Iterations(o)
        | Command::OracleCheck(o) => o.clone(),
    };
    let cfg = match build_config(&opts) {
        Ok(c) => c,
        Err(e) => {
            io::eprintln_soft(&format!("configuration error: {e}"));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Run(_) => io::cmd_run(&cfg).map(|report| {
            println!(
                "converged={} outer={} linear_solves={} final_diff={:e}",
                report.converged, report.total_outer, report.total_linear_solves, report.final_diff
            );
        }),
        Command::Convergence(_) => io::cmd_convergence(&cfg).map(|records| {
            println!("{}", io::CONVERGENCE_HEADER);
            for r in &records {
                println!(
                    "{:.6e},{:.6e},{:.3},{:.6e},{:.3},{:.6e},{:.3}",
                    r.h,
                    r.err_u,
                    r.rate_u.unwrap_or(0.0),
                    r.err_latent,
                    r.rate_latent.unwrap_or(0.0),
                    r.err_flux,
                    r.rate_flux.unwrap_or(0.0)
                );
            }
        }),
        Command::Table1(_) => io::cmd_table1(&cfg).map(|rows| {
            for r in &rows {
                println!(
                    "h={:.4e} baseline=[{:.6}, {:.6}] constrained=[{:.6}, {:.6}] xi=({:.2e}, {:.2e})",
                    r.h,
                    r.baseline_min,
                    r.baseline_max,
                    r.fospg_min,
                    r.fospg_max,
                    r.baseline_xi_max,
                    r.fospg_xi_max
                );
            }
        }),
        Command::Iterations(_) => io::cmd_iterations(&cfg).map(|rows| {
            let total: usize = rows.iter().map(|r| r.linear_solves).sum();
            println!("rows={} total_linear_solves={total}", rows.len());
        }),
        Command::OracleCheck(_) => io::cmd_oracle_check(&cfg).map(|check| {
            println!(
                "max_u_gap={:e} kkt_residual={:e} oracle_iterations={}",
                check.max_u_gap, check.kkt_residual, check.oracle_iterations
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            io::eprintln_soft(&format!("error: {e}"));
            exit_code_for(&e)
        }
    }
}
