//! The five benchmark problems: domain, diffusion tensor, data, bounds,
//! default operator/step-size/stabilization choices, and exact solutions
//! where available.

use std::sync::Arc;

use crate::latent::{OperatorKind, PointBounds};
use crate::mesh::{self, ElementKind, Mesh, MARKER_HOLE};
use crate::solver::AlphaSchedule;
use crate::{Error, Result};

/// A pointwise bound: constant (possibly infinite) or spatially varying.
#[derive(Clone)]
pub enum Bound {
    Const(f64),
    Func(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
}

impl Bound {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Bound::Const(c) => *c,
            Bound::Func(f) => f(x),
        }
    }

    pub fn is_finite_everywhere(&self) -> bool {
        match self {
            Bound::Const(c) => c.is_finite(),
            Bound::Func(_) => true,
        }
    }
}

impl std::fmt::Debug for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Const(c) => write!(f, "Const({c})"),
            Bound::Func(_) => write!(f, "Func(..)"),
        }
    }
}

/// Mesh family of a problem, parameterized by a refinement level.
#[derive(Debug, Clone, Copy)]
pub enum MeshFamily {
    /// Structured triangles on a square `(lo,hi)²`, `base·2^level` cells/side.
    SquareTriangles { base: usize, lo: f64, hi: f64 },
    /// Structured rectangles on the unit square.
    SquareRectangles { base: usize },
    /// Vertical-faults unit square (n must remain a multiple of 20).
    VerticalFaults { base: usize },
    /// Punctured unit square (n must remain a multiple of 9).
    Punctured { base: usize },
    /// Polygonal disk, refined `base + level` times.
    Disk { base_refine: usize },
}

impl MeshFamily {
    pub fn build(&self, level: usize) -> Result<Mesh> {
        match *self {
            MeshFamily::SquareTriangles { base, lo, hi } => {
                mesh::square_triangles(base << level, lo, hi)
            }
            MeshFamily::SquareRectangles { base } => {
                mesh::unit_square_rectangles(base << level)
            }
            MeshFamily::VerticalFaults { base } => mesh::vertical_faults_mesh(base << level),
            MeshFamily::Punctured { base } => mesh::punctured_square(base << level),
            MeshFamily::Disk { base_refine } => mesh::polygonal_disk(base_refine + level),
        }
    }

    /// Build with an explicit size parameter (cells per side, or refinement
    /// count for the disk).
    pub fn build_n(&self, n: usize) -> Result<Mesh> {
        match *self {
            MeshFamily::SquareTriangles { lo, hi, .. } => mesh::square_triangles(n, lo, hi),
            MeshFamily::SquareRectangles { .. } => mesh::unit_square_rectangles(n),
            MeshFamily::VerticalFaults { .. } => mesh::vertical_faults_mesh(n),
            MeshFamily::Punctured { .. } => mesh::punctured_square(n),
            MeshFamily::Disk { .. } => mesh::polygonal_disk(n),
        }
    }

    pub fn element_kind(&self) -> ElementKind {
        match self {
            MeshFamily::SquareRectangles { .. } => ElementKind::Rectangle,
            _ => ElementKind::Triangle,
        }
    }
}

type TensorFn = Arc<dyn Fn([f64; 2], i32) -> [[f64; 2]; 2] + Send + Sync>;
type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
type BoundaryFn = Arc<dyn Fn([f64; 2], i32) -> f64 + Send + Sync>;
type FluxFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Complete description of one benchmark problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub mesh: MeshFamily,
    /// Diffusion tensor A(x, region).
    pub a: TensorFn,
    /// Source term.
    pub f: ScalarFn,
    /// Dirichlet data g(x, boundary marker).
    pub g: BoundaryFn,
    pub lower: Bound,
    pub upper: Bound,
    /// Default superposition operator family.
    pub operator: OperatorKind,
    /// Default proximal step-size schedule.
    pub alpha: AlphaSchedule,
    pub exact_u: Option<ScalarFn>,
    pub exact_q: Option<FluxFn>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("mesh", &self.mesh)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("operator", &self.operator)
            .finish()
    }
}

impl ProblemSpec {
    /// Bounds at one point.
    pub fn point_bounds(&self, x: [f64; 2]) -> PointBounds {
        PointBounds {
            lo: self.lower.eval(x),
            hi: self.upper.eval(x),
        }
    }

    /// Default stabilization parameters (ε₁, ε₂) for degree p.
    pub fn default_eps(&self, p: usize) -> (f64, f64) {
        match self.name {
            "punctured" => {
                if p >= 2 {
                    (0.1, 0.1)
                } else {
                    (0.0, 0.0)
                }
            }
            "biactive" => {
                let eps2 = if p <= 1 { 0.0 } else { 1e-7 };
                (0.0, eps2)
            }
            "spherical" => {
                if p >= 2 {
                    (0.0, 2e-4)
                } else {
                    (0.0, 0.0)
                }
            }
            _ => (0.0, 0.0),
        }
    }

    pub fn by_name(name: &str) -> Result<ProblemSpec> {
        match name {
            "oblique-flow" => Ok(oblique_flow()),
            "vertical-faults" => Ok(vertical_faults()),
            "punctured" => Ok(punctured_domain()),
            "biactive" => Ok(biactive()),
            "spherical" => Ok(spherical_obstacle()),
            _ => Err(Error::InvalidArgument(format!(
                "unknown problem '{name}' (expected oblique-flow | vertical-faults | punctured | biactive | spherical)"
            ))),
        }
    }
}

fn rotated_tensor(lambda1: f64, lambda2: f64, theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    // Q diag(λ1, λ2) Qᵀ with Q the rotation by θ.
    [
        [
            c * c * lambda1 + s * s * lambda2,
            s * c * (lambda1 - lambda2),
        ],
        [
            s * c * (lambda1 - lambda2),
            s * s * lambda1 + c * c * lambda2,
        ],
    ]
}

/// Anisotropic diffusion with flow direction rotated by 2π/9 and cross
/// diffusivity 10⁻³ on the unit square; piecewise-linear boundary data.
pub fn oblique_flow() -> ProblemSpec {
    let theta = 2.0 * std::f64::consts::PI / 9.0;
    let a = rotated_tensor(1.0, 1e-3, theta);
    let g_bottom = |x: f64| {
        if x <= 0.2 {
            1.0
        } else if x <= 0.3 {
            2.0 - 5.0 * x
        } else {
            0.5
        }
    };
    let g_top = |x: f64| {
        if x <= 0.7 {
            0.5
        } else if x <= 0.8 {
            4.0 - 5.0 * x
        } else {
            0.0
        }
    };
    let g = move |x: [f64; 2], _m: i32| {
        let eps = 1e-12;
        if x[1] < eps {
            g_bottom(x[0])
        } else if x[1] > 1.0 - eps {
            g_top(x[0])
        } else if x[0] < eps {
            // g(0, y) = g(y, 0)
            g_bottom(x[1])
        } else {
            // g(1, y) = g(y, 1)
            g_top(x[1])
        }
    };
    ProblemSpec {
        name: "oblique-flow",
        mesh: MeshFamily::SquareTriangles {
            base: 16,
            lo: 0.0,
            hi: 1.0,
        },
        a: Arc::new(move |_x, _r| a),
        f: Arc::new(|_| 0.0),
        g: Arc::new(g),
        lower: Bound::Const(0.0),
        upper: Bound::Const(1.0),
        operator: OperatorKind::Algebraic,
        alpha: AlphaSchedule::Geometric { a0: 1.0, ratio: 4.0 },
        exact_u: None,
        exact_q: None,
    }
}

/// Layered medium with strongly contrasting diffusivities in vertical bands.
pub fn vertical_faults() -> ProblemSpec {
    ProblemSpec {
        name: "vertical-faults",
        mesh: MeshFamily::VerticalFaults { base: 20 },
        a: Arc::new(|_x, region| {
            if region == 1 {
                [[1e3, 0.0], [0.0, 10.0]]
            } else {
                [[1e-2, 0.0], [0.0, 1e-3]]
            }
        }),
        f: Arc::new(|_| 0.0),
        g: Arc::new(|x, _m| 1.0 - x[0]),
        lower: Bound::Const(0.0),
        upper: Bound::Const(1.0),
        operator: OperatorKind::Algebraic,
        alpha: AlphaSchedule::Geometric { a0: 1.0, ratio: 4.0 },
        exact_u: None,
        exact_q: None,
    }
}

/// Unit square with a central hole; strong anisotropy with spatially varying
/// direction θ(x,y) = π sin(x) sin(y); g = 1 on the hole, 0 outside.
pub fn punctured_domain() -> ProblemSpec {
    ProblemSpec {
        name: "punctured",
        mesh: MeshFamily::Punctured { base: 9 },
        a: Arc::new(|x, _r| {
            let theta = std::f64::consts::PI * x[0].sin() * x[1].sin();
            rotated_tensor(1e3, 1.0, theta)
        }),
        f: Arc::new(|_| 0.0),
        g: Arc::new(|_x, marker| if marker == MARKER_HOLE { 1.0 } else { 0.0 }),
        lower: Bound::Const(0.0),
        upper: Bound::Const(1.0),
        operator: OperatorKind::Algebraic,
        alpha: AlphaSchedule::Geometric {
            a0: 1e-4,
            ratio: 1.5,
        },
        exact_u: None,
        exact_q: None,
    }
}

/// Unilateral obstacle problem on (−1,1)² whose solution touches the
/// constraint with a vanishing multiplier on half the domain (biactivity).
pub fn biactive() -> ProblemSpec {
    let exact = |x: [f64; 2]| if x[0] >= 0.0 { x[0].powi(4) } else { 0.0 };
    ProblemSpec {
        name: "biactive",
        mesh: MeshFamily::SquareTriangles {
            base: 8,
            lo: -1.0,
            hi: 1.0,
        },
        a: Arc::new(|_x, _r| [[1.0, 0.0], [0.0, 1.0]]),
        f: Arc::new(|x| if x[0] >= 0.0 { -12.0 * x[0] * x[0] } else { 0.0 }),
        g: Arc::new(move |x, _m| exact(x)),
        lower: Bound::Const(0.0),
        upper: Bound::Const(f64::INFINITY),
        operator: OperatorKind::Exp,
        alpha: AlphaSchedule::Geometric { a0: 1.0, ratio: 2.0 },
        exact_u: Some(Arc::new(exact)),
        exact_q: Some(Arc::new(|x| {
            // q = −∇u.
            if x[0] >= 0.0 {
                [-4.0 * x[0].powi(3), 0.0]
            } else {
                [0.0, 0.0]
            }
        })),
    }
}

/// The −1 branch of the Lambert W function, solving w·e^w = t for
/// t ∈ (−1/e, 0) with w ≤ −1, by Newton iteration.
pub fn lambert_w_m1(t: f64) -> f64 {
    assert!(t > -1.0 / std::f64::consts::E && t < 0.0);
    // Fixed point w = ln(−t) − ln(−w) stays on the w ≤ −1 branch and
    // converges linearly; a plain Newton start can jump to the upper branch.
    let l = (-t).ln();
    let mut w = if l < -2.0 { l } else { -2.0 };
    for _ in 0..200 {
        let next = l - (-w).ln();
        if (next - w).abs() < 1e-13 {
            w = next;
            break;
        }
        w = next;
    }
    // Guarded Newton polish to machine precision.
    for _ in 0..10 {
        let ew = w.exp();
        let fval = w * ew - t;
        let fprime = ew * (1.0 + w);
        let mut step = fval / fprime;
        while w - step >= -1.0 {
            step *= 0.5;
        }
        w -= step;
        if step.abs() < 1e-16 * w.abs().max(1.0) {
            break;
        }
    }
    w
}

/// Radius of the contact set of the spherical obstacle problem.
pub fn spherical_contact_radius() -> f64 {
    // a = exp(W₋₁(−1/(2e²))/2 + 1).
    let w = lambert_w_m1(-1.0 / (2.0 * std::f64::consts::E.powi(2)));
    (w / 2.0 + 1.0).exp()
}

/// Obstacle of the spherical problem: upper hemisphere of radius 1/2 for
/// r ≤ 9/20, then its C¹ linear extension in r.
pub fn spherical_lower_bound(x: [f64; 2]) -> f64 {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let r0 = 0.45;
    if r <= r0 {
        (0.25 - r * r).sqrt()
    } else {
        let v0 = (0.25 - r0 * r0).sqrt();
        let d0 = -r0 / v0;
        v0 + d0 * (r - r0)
    }
}

/// Classical spherical obstacle problem on the unit disk with a closed-form
/// solution u = Q ln r outside the contact disk r ≤ a.
pub fn spherical_obstacle() -> ProblemSpec {
    let a = spherical_contact_radius();
    let q_coef = (0.25 - a * a).sqrt() / a.ln();
    let exact_u = move |x: [f64; 2]| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r > a {
            q_coef * r.ln()
        } else {
            spherical_lower_bound(x)
        }
    };
    let exact_q = move |x: [f64; 2]| {
        // q = −∇u.
        let r2 = x[0] * x[0] + x[1] * x[1];
        let r = r2.sqrt();
        if r > a {
            [-q_coef * x[0] / r2, -q_coef * x[1] / r2]
        } else {
            // u = √(1/4−r²): ∇u = −(x,y)/√(1/4−r²).
            let v = (0.25 - r2).sqrt();
            [x[0] / v, x[1] / v]
        }
    };
    ProblemSpec {
        name: "spherical",
        mesh: MeshFamily::Disk { base_refine: 2 },
        a: Arc::new(|_x, _r| [[1.0, 0.0], [0.0, 1.0]]),
        f: Arc::new(|_| 0.0),
        g: Arc::new(|_x, _m| 0.0),
        lower: Bound::Func(Arc::new(spherical_lower_bound)),
        upper: Bound::Const(f64::INFINITY),
        operator: OperatorKind::Exp,
        alpha: AlphaSchedule::Constant(1.0),
        exact_u: Some(Arc::new(exact_u)),
        exact_q: Some(Arc::new(exact_q)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oblique_boundary_values() {
        let p = oblique_flow();
        assert!(((p.g)([0.1, 0.0], 0) - 1.0).abs() < 1e-14);
        assert!(((p.g)([0.25, 0.0], 0) - 0.75).abs() < 1e-14);
        assert!(((p.g)([0.9, 1.0], 0) - 0.0).abs() < 1e-14);
        // Reuse rules.
        assert!(((p.g)([0.0, 0.1], 0) - 1.0).abs() < 1e-14);
        assert!(((p.g)([1.0, 0.9], 0) - 0.0).abs() < 1e-14);
        assert!(((p.g)([1.0, 0.75], 0) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn vertical_faults_tensor() {
        let p = vertical_faults();
        let region = crate::mesh::vertical_faults_region(0.25, 0.10);
        let a = (p.a)([0.25, 0.10], region);
        assert_eq!(a[0][0], 1e3);
        assert_eq!(a[1][1], 10.0);
        assert!(((p.g)([0.0, 0.4], 0) - 1.0).abs() < 1e-14);
        assert!(((p.g)([1.0, 0.4], 0)).abs() < 1e-14);
    }

    #[test]
    fn punctured_tensor_and_data() {
        let p = punctured_domain();
        // θ(0,0) = 0: A = diag(10³, 1).
        let a = (p.a)([0.0, 0.0], 0);
        assert!((a[0][0] - 1e3).abs() < 1e-9);
        assert!((a[1][1] - 1.0).abs() < 1e-9);
        assert!(a[0][1].abs() < 1e-9);
        assert_eq!((p.g)([0.5, 4.0 / 9.0], MARKER_HOLE), 1.0);
        assert_eq!((p.g)([0.5, 0.0], crate::mesh::MARKER_OUTER), 0.0);
    }

    #[test]
    fn biactive_exact_solution_consistency() {
        let p = biactive();
        let u = p.exact_u.as_ref().unwrap();
        assert_eq!(u([-0.5, 0.3]), 0.0);
        assert_eq!(u([1.0, 0.3]), 1.0);
        assert!(((p.f)([0.5, 0.0]) + 3.0).abs() < 1e-14);
        // −Δu = f for x > 0: Δ(x⁴) = 12x².
        for &x in &[0.2, 0.5, 0.8] {
            let h = 1e-4;
            let lap = (u([x + h, 0.0]) - 2.0 * u([x, 0.0]) + u([x - h, 0.0])) / (h * h);
            assert!((-lap - (p.f)([x, 0.0])).abs() < 1e-5);
        }
    }

    #[test]
    fn lambert_and_contact_radius() {
        let t = -1.0 / (2.0 * std::f64::consts::E.powi(2));
        let w = lambert_w_m1(t);
        assert!((w * w.exp() - t).abs() < 1e-16);
        assert!(w < -1.0);
        let a = spherical_contact_radius();
        assert!((a - 0.34898).abs() < 5e-6, "a = {a}");
    }

    #[test]
    fn spherical_contact_matching() {
        let p = spherical_obstacle();
        let a = spherical_contact_radius();
        let u = p.exact_u.as_ref().unwrap();
        // Value continuity at r = a.
        let inner = u([a - 1e-12, 0.0]);
        let outer = u([a + 1e-12, 0.0]);
        assert!((inner - outer).abs() < 1e-9);
        // Radial derivative continuity at r = a (C¹ matching defines a).
        let h = 1e-6;
        let din = (u([a - h, 0.0]) - u([a - 3.0 * h, 0.0])) / (2.0 * h);
        let dout = (u([a + 3.0 * h, 0.0]) - u([a + h, 0.0])) / (2.0 * h);
        assert!((din - dout).abs() < 1e-4, "{din} vs {dout}");
        // Obstacle extension: C¹ at r = 9/20.
        let r0 = 0.45f64;
        let v0 = (0.25 - r0 * r0).sqrt();
        assert!((spherical_lower_bound([r0, 0.0]) - v0).abs() < 1e-14);
        let dl = (spherical_lower_bound([r0 + h, 0.0]) - spherical_lower_bound([r0 - h, 0.0]))
            / (2.0 * h);
        // Central difference across the junction sees the second-derivative
        // jump at O(h): accuracy ~h·|φ''|/4.
        assert!((dl - (-r0 / v0)).abs() < 1e-4);
        // g = 0 on the outer circle matches the exact solution: Q ln 1 = 0.
        assert!(u([1.0, 0.0]).abs() < 1e-14);
    }

    #[test]
    fn tensor_eigenvalue_ranges() {
        // A eigenvalues within the declared spread at many sample points.
        let p = punctured_domain();
        for i in 0..100 {
            for j in 0..100 {
                let x = [i as f64 / 99.0, j as f64 / 99.0];
                let a = (p.a)(x, 0);
                let tr = a[0][0] + a[1][1];
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
                let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
                assert!((l1 - 1e3).abs() < 1e-6 && (l2 - 1.0).abs() < 1e-9);
            }
        }
    }
}
