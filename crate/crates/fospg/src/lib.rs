//! Hybridized first-order system proximal Galerkin (FOSPG) solver for
//! bound-constrained elliptic problems in 2D.
//!
//! The library discretizes anisotropic diffusion and obstacle problems with a
//! hybridized mixed method (broken Raviart–Thomas fluxes, broken scalar
//! elements, facet multipliers) and enforces pointwise bounds through a latent
//! variable and a family of superposition operators.  A proximal outer loop
//! drives a Newton inner loop whose linear systems are statically condensed to
//! sparse symmetric positive definite facet systems.
//!
//! Modules:
//! - [`mesh`]: structured triangle/rectangle meshes of the benchmark domains.
//! - [`fem`]: quadrature, reference bases, Piola transforms, assembly, liftings.
//! - [`latent`]: superposition operators, entropies, Bregman distances.
//! - [`solver`]: proximal outer loop, Newton, condensation, linear solvers.
//! - [`oracle`]: projected-gradient solver for the discrete mixed VI (p = 0).
//! - [`analysis`]: errors, rates, bound scans, mass conservation, limiter.
//! - [`problems`]: the five benchmark problem definitions.
//! - [`io`]: VTK/CSV/JSON artifact writers used by the CLI.

pub mod analysis;
pub mod fem;
pub mod io;
pub mod latent;
pub mod mesh;
pub mod oracle;
pub mod problems;
pub mod solver;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
