//! Superposition operator families Υ with derivatives and inverses, the
//! associated entropies R, convex conjugates R*, and the discrete Bregman
//! distance.
//!
//! Four families are provided:
//! - `FermiDirac`: Υ(z) = (u̲ + ū e^z)/(1 + e^z) for double obstacles;
//! - `Algebraic`:  Υ(z) = (u̲+ū)/2 + (ū−u̲)/2 · z/√(1+z²);
//! - `Exp`:        Υ(z) = u̲ + e^z for unilateral (lower) obstacles;
//! - `Softplus`:   Υ(z) = u̲ + ln(1 + e^z).
//!
//! Every evaluation clamps the latent argument at ±ψ_max = 500 before
//! exponentials so that no finite input can overflow; beyond the clamp Υ
//! saturates and Υ′ is floored.

/// Clamp threshold for the latent variable.
pub const PSI_MAX: f64 = 500.0;

/// Floor for Υ′ to keep Newton systems well defined under saturation.  The
/// floor keeps the linearized Gram matrix positive definite with a relative
/// margin safely above unit roundoff, so element Cholesky factorizations
/// survive arbitrarily large proximal steps; it is far below discretization
/// accuracy and does not shift the fixed point, which depends on Υ only.
pub const UPSILON_PRIME_FLOOR: f64 = 1e-13;

/// The four superposition operator families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum OperatorKind {
    FermiDirac,
    Algebraic,
    Exp,
    Softplus,
}

impl OperatorKind {
    /// True when the family requires a finite upper bound.
    pub fn needs_upper_bound(self) -> bool {
        matches!(self, OperatorKind::FermiDirac | OperatorKind::Algebraic)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fermi-dirac" => Some(OperatorKind::FermiDirac),
            "algebraic" => Some(OperatorKind::Algebraic),
            "exp" => Some(OperatorKind::Exp),
            "softplus" => Some(OperatorKind::Softplus),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::FermiDirac => "fermi-dirac",
            OperatorKind::Algebraic => "algebraic",
            OperatorKind::Exp => "exp",
            OperatorKind::Softplus => "softplus",
        }
    }
}

/// Pointwise bounds (u̲, ū) at one evaluation point; either may be infinite
/// where the operator family permits it.
#[derive(Debug, Clone, Copy)]
pub struct PointBounds {
    pub lo: f64,
    pub hi: f64,
}

impl PointBounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo < hi, "bounds must satisfy u̲ < ū (got {lo}, {hi})");
        PointBounds { lo, hi }
    }
}

/// Numerically stable logistic function.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^z).
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn clamp_z(z: f64) -> f64 {
    z.clamp(-PSI_MAX, PSI_MAX)
}

/// Υ(x, z): the superposition operator value.
pub fn upsilon(kind: OperatorKind, b: PointBounds, z: f64) -> f64 {
    let z = clamp_z(z);
    match kind {
        OperatorKind::FermiDirac => b.lo + (b.hi - b.lo) * sigmoid(z),
        OperatorKind::Algebraic => {
            0.5 * (b.lo + b.hi) + 0.5 * (b.hi - b.lo) * z / (1.0 + z * z).sqrt()
        }
        OperatorKind::Exp => b.lo + z.exp(),
        OperatorKind::Softplus => b.lo + softplus(z),
    }
}

/// Υ′(x, z), floored at a tiny positive value.
pub fn upsilon_prime(kind: OperatorKind, b: PointBounds, z: f64) -> f64 {
    let z = clamp_z(z);
    let d = match kind {
        OperatorKind::FermiDirac => {
            let s = sigmoid(z);
            (b.hi - b.lo) * s * (1.0 - s)
        }
        OperatorKind::Algebraic => 0.5 * (b.hi - b.lo) * (1.0 + z * z).powf(-1.5),
        OperatorKind::Exp => z.exp(),
        OperatorKind::Softplus => sigmoid(z),
    };
    d.max(UPSILON_PRIME_FLOOR)
}

/// Υ⁻¹(x, y) for y strictly inside (u̲, ū).
pub fn upsilon_inverse(kind: OperatorKind, b: PointBounds, y: f64) -> f64 {
    assert!(
        y > b.lo && y < b.hi,
        "upsilon_inverse requires y strictly inside the bounds"
    );
    match kind {
        OperatorKind::FermiDirac => {
            let t = (y - b.lo) / (b.hi - b.lo);
            (t / (1.0 - t)).ln()
        }
        OperatorKind::Algebraic => {
            let s = (2.0 * y - b.lo - b.hi) / (b.hi - b.lo);
            s / (1.0 - s * s).sqrt()
        }
        OperatorKind::Exp => (y - b.lo).ln(),
        OperatorKind::Softplus => {
            // z = ln(e^t − 1) with t = y − u̲, computed stably.
            let t = y - b.lo;
            if t > 30.0 {
                t + (-((-t).exp())).ln_1p()
            } else {
                t.exp_m1().ln()
            }
        }
    }
}

/// The entropy R(x, y) on the closed bound interval (+∞ outside); defined up
/// to an additive constant that cancels in every Bregman distance.
pub fn entropy(kind: OperatorKind, b: PointBounds, y: f64) -> f64 {
    let xlnx = |t: f64| if t <= 0.0 { 0.0 } else { t * t.ln() };
    match kind {
        OperatorKind::FermiDirac => xlnx(y - b.lo) + xlnx(b.hi - y),
        OperatorKind::Algebraic => {
            // Antiderivative of Υ⁻¹: −(ū−u̲)/2 · √(1−s²).
            let s = (2.0 * y - b.lo - b.hi) / (b.hi - b.lo);
            -0.5 * (b.hi - b.lo) * (1.0 - s * s).max(0.0).sqrt()
        }
        OperatorKind::Exp => xlnx(y - b.lo) - (y - b.lo),
        OperatorKind::Softplus => {
            // Via the conjugate identity R(Υ(z)) = zΥ(z) − R*(z).
            if y <= b.lo {
                // Limit value ∫₀^∞ softplus(−t) dt = π²/12.
                return std::f64::consts::PI * std::f64::consts::PI / 12.0;
            }
            let z = clamp_z(upsilon_inverse(kind, b, y));
            z * (y - b.lo) - softplus_integral(z)
        }
    }
}

/// R′(x, y) = Υ⁻¹(x, y), singular at the bounds.
pub fn entropy_prime(kind: OperatorKind, b: PointBounds, y: f64) -> f64 {
    upsilon_inverse(kind, b, y)
}

/// Convex conjugate R*(x, z) = zΥ(x,z) − R(x, Υ(x,z)).
pub fn conjugate(kind: OperatorKind, b: PointBounds, z: f64) -> f64 {
    let z = clamp_z(z);
    let y = upsilon(kind, b, z);
    // The shifted part u̲·z (and ū for double obstacles) is carried by the
    // entropy evaluated at the image point.
    z * y - entropy(kind, b, y)
}

/// ∫₀^z softplus(t) dt by composite Gauss quadrature (smooth integrand).
fn softplus_integral(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    // For large |z| use the asymptotics to keep panel counts small:
    // ∫₀^z softplus = z²/2 + π²/12 − ∫_z^∞ softplus(−t)dt for z > 0 and
    // symmetric counterpart for z < 0; the tail is < e^{−|z|}.
    if z > 40.0 {
        return 0.5 * z * z + std::f64::consts::PI * std::f64::consts::PI / 12.0 - (-z).exp();
    }
    if z < -40.0 {
        return std::f64::consts::PI * std::f64::consts::PI / 12.0 - z.exp();
    }
    let (gt, gw) = crate::fem::quadrature::gauss_legendre_1d(24);
    let panels = 8;
    let mut acc = 0.0;
    for p in 0..panels {
        let a = z * p as f64 / panels as f64;
        let bnd = z * (p + 1) as f64 / panels as f64;
        for (&t, &w) in gt.iter().zip(&gw) {
            acc += (bnd - a) * w * softplus(a + t * (bnd - a));
        }
    }
    acc
}

/// Pointwise Bregman integrand D(u, v) = R(u) − R(v) − R′(v)(u − v); v must
/// be strictly inside the bounds, u within the closed bounds.
pub fn bregman_pointwise(kind: OperatorKind, b: PointBounds, u: f64, v: f64) -> f64 {
    entropy(kind, b, u) - entropy(kind, b, v) - entropy_prime(kind, b, v) * (u - v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: PointBounds = PointBounds { lo: 0.0, hi: 1.0 };
    const ALL: [OperatorKind; 4] = [
        OperatorKind::FermiDirac,
        OperatorKind::Algebraic,
        OperatorKind::Exp,
        OperatorKind::Softplus,
    ];

    #[test]
    fn values_at_zero() {
        assert!((upsilon(OperatorKind::FermiDirac, UNIT, 0.0) - 0.5).abs() < 1e-15);
        assert!((upsilon_prime(OperatorKind::FermiDirac, UNIT, 0.0) - 0.25).abs() < 1e-15);
        assert!((upsilon(OperatorKind::Exp, UNIT, 0.0) - 1.0).abs() < 1e-15);
        assert!((upsilon(OperatorKind::Softplus, UNIT, 0.0) - 2f64.ln()).abs() < 1e-15);
        // Exp: Υ′(z) = Υ(z) − u̲.
        for z in [-3.0, 0.0, 2.5] {
            let b = PointBounds::new(0.7, f64::INFINITY);
            assert!(
                (upsilon_prime(OperatorKind::Exp, b, z) - (upsilon(OperatorKind::Exp, b, z) - 0.7))
                    .abs()
                    < 1e-14
            );
        }
    }

    fn bounds_for(kind: OperatorKind) -> PointBounds {
        if kind.needs_upper_bound() {
            PointBounds::new(-0.5, 2.0)
        } else {
            PointBounds::new(-0.5, f64::INFINITY)
        }
    }

    #[test]
    fn inverse_roundtrip() {
        for kind in ALL {
            let b = bounds_for(kind);
            for z in [-30.0, -5.0, -0.3, 0.0, 0.7, 5.0, 30.0] {
                let y = upsilon(kind, b, z);
                let back = upsilon_inverse(kind, b, y);
                // Near saturation (|z| large) the image y sits within machine
                // epsilon of a bound, so the recovered z loses ~e^{-|z|}/ε_mach
                // digits; the tolerance reflects that.
                let tol = if z.abs() > 20.0 { 1e-3 } else { 1e-9 };
                assert!(
                    (back - z).abs() < tol * z.abs().max(1.0),
                    "{kind:?} z={z}: roundtrip {back}"
                );
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for kind in ALL {
            let b = bounds_for(kind);
            for z in [-20.0f64, -4.0, -1.0, 0.0, 0.5, 3.0, 15.0] {
                let h = 1e-6 * z.abs().max(1.0);
                let fd = (upsilon(kind, b, z + h) - upsilon(kind, b, z - h)) / (2.0 * h);
                let d = upsilon_prime(kind, b, z);
                // Central differences lose accuracy where Υ saturates, hence
                // the relative tolerance with an absolute floor.
                assert!(
                    (fd - d).abs() <= 1e-4 * d.abs() + 1e-12,
                    "{kind:?} z={z}: {fd} vs {d}"
                );
            }
        }
    }

    #[test]
    fn entropy_values() {
        // Fermi-Dirac on [0,1]: R(1/2) = −ln 2, R′(1/2) = 0, R(0) = 0.
        assert!((entropy(OperatorKind::FermiDirac, UNIT, 0.5) + 2f64.ln()).abs() < 1e-14);
        assert!(entropy_prime(OperatorKind::FermiDirac, UNIT, 0.5).abs() < 1e-14);
        assert!(entropy(OperatorKind::FermiDirac, UNIT, 0.0).abs() < 1e-14);
        // Shannon with u̲ = 0: R(1) = −1, R′(1) = 0.
        let b = PointBounds::new(0.0, f64::INFINITY);
        assert!((entropy(OperatorKind::Exp, b, 1.0) + 1.0).abs() < 1e-14);
        assert!(entropy_prime(OperatorKind::Exp, b, 1.0).abs() < 1e-14);
    }

    #[test]
    fn entropy_prime_inverts_upsilon() {
        for kind in ALL {
            let b = bounds_for(kind);
            for z in [-8.0, -1.2, 0.0, 0.4, 6.0] {
                let y = upsilon(kind, b, z);
                assert!(
                    (entropy_prime(kind, b, y) - z).abs() < 1e-9,
                    "{kind:?} z={z}"
                );
            }
        }
    }

    #[test]
    fn entropy_convex_midpoint() {
        for kind in ALL {
            let b = bounds_for(kind);
            for (za, zb) in [(-3.0, 1.0), (0.2, 4.0), (-6.0, -1.0)] {
                let ya = upsilon(kind, b, za);
                let yb = upsilon(kind, b, zb);
                let mid = 0.5 * (ya + yb);
                let lhs = entropy(kind, b, mid);
                let rhs = 0.5 * (entropy(kind, b, ya) + entropy(kind, b, yb));
                assert!(lhs <= rhs + 1e-12, "{kind:?}: midpoint {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn conjugate_derivative_is_upsilon() {
        for kind in ALL {
            let b = bounds_for(kind);
            let mut z = -10.0;
            while z <= 10.0 {
                let h = 1e-5;
                let fd = (conjugate(kind, b, z + h) - conjugate(kind, b, z - h)) / (2.0 * h);
                let y = upsilon(kind, b, z);
                assert!(
                    (fd - y).abs() < 1e-6 * y.abs().max(1.0),
                    "{kind:?} z={z}: dR*/dz {fd} vs Υ {y}"
                );
                z += 0.5;
            }
        }
    }

    #[test]
    fn monotone_and_in_range_under_extreme_inputs() {
        for kind in ALL {
            let b = bounds_for(kind);
            let mut prev = f64::NEG_INFINITY;
            for z in [-1e6, -500.0, -30.0, 0.0, 30.0, 500.0, 1e6] {
                let y = upsilon(kind, b, z);
                assert!(y.is_finite(), "{kind:?} z={z}");
                assert!(y >= prev, "{kind:?}: not monotone at z={z}");
                assert!(y >= b.lo && y <= b.hi, "{kind:?} z={z}: out of range");
                assert!(upsilon_prime(kind, b, z) > 0.0);
                prev = y;
            }
        }
    }

    #[test]
    fn bregman_nonnegative_strict() {
        for kind in ALL {
            let b = bounds_for(kind);
            for i in 0..100 {
                let zu = -6.0 + 12.0 * (i as f64 * 0.617).fract();
                let zv = -6.0 + 12.0 * (i as f64 * 0.317).fract();
                let u = upsilon(kind, b, zu);
                let v = upsilon(kind, b, zv);
                let d = bregman_pointwise(kind, b, u, v);
                if (u - v).abs() < 1e-10 {
                    assert!(d.abs() < 1e-12);
                } else {
                    assert!(d > 0.0, "{kind:?}: D({u},{v}) = {d}");
                }
            }
        }
    }

    #[test]
    fn bregman_constant_example() {
        // Fermi-Dirac [0,1], u=0.6, v=0.5: D = R(0.6) + ln 2.
        let d = bregman_pointwise(OperatorKind::FermiDirac, UNIT, 0.6, 0.5);
        let expect = entropy(OperatorKind::FermiDirac, UNIT, 0.6) + 2f64.ln();
        assert!((d - expect).abs() < 1e-14);
        assert!((d - 0.020135513550688863).abs() < 1e-12);
    }
}
