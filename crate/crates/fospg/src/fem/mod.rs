//! Finite element machinery: quadrature, reference bases, Piola transforms,
//! dof maps, local assembly, projections, liftings, and norms.

pub mod assemble;
pub mod basis;
pub mod conforming;
pub mod lifting;
pub mod norms;
pub mod project;
pub mod quadrature;
pub mod rt;

pub use assemble::{assemble_local, LocalBlocks};
pub use basis::{check_degree, scalar_dim, ScalarBasis};
pub use conforming::DivConforming;
pub use lifting::LiftingOperator;
pub use quadrature::QuadratureRule;
pub use rt::{reference_edges, rt_dim, RtBasis};

use crate::mesh::ElementKind;
use crate::Result;
use quadrature::{
    gauss_legendre_1d, rule_triangle_any, tensor_rule_rect, tensor_rule_rect_points,
    triangle_centroid_rule, vertex_augmented_triangle,
};
use rt::RefEdge;

/// A quadrature rule together with reference-basis tabulations at its points.
#[derive(Debug, Clone)]
pub struct RuleTab {
    pub rule: QuadratureRule,
    /// Scalar basis values, `[point][dof]`.
    pub sc_vals: Vec<Vec<f64>>,
    /// Scalar basis reference gradients, `[point][dof]`.
    pub sc_grads: Vec<Vec<[f64; 2]>>,
    /// RT basis reference values, `[point][dof]`.
    pub rt_vals: Vec<Vec<[f64; 2]>>,
    /// RT basis reference divergences, `[point][dof]`.
    pub rt_divs: Vec<Vec<f64>>,
}

impl RuleTab {
    fn new(rule: QuadratureRule, scalar: &ScalarBasis, rt: &RtBasis) -> Self {
        let mut sc_vals = Vec::with_capacity(rule.len());
        let mut sc_grads = Vec::with_capacity(rule.len());
        let mut rt_vals = Vec::with_capacity(rule.len());
        let mut rt_divs = Vec::with_capacity(rule.len());
        for &p in &rule.points {
            let (v, g) = scalar.eval(p);
            sc_vals.push(v);
            sc_grads.push(g);
            let (rv, rd) = rt.eval(p);
            rt_vals.push(rv);
            rt_divs.push(rd);
        }
        RuleTab {
            rule,
            sc_vals,
            sc_grads,
            rt_vals,
            rt_divs,
        }
    }
}

/// Tabulation on one local reference edge.
#[derive(Debug, Clone)]
pub struct EdgeTab {
    pub edge: RefEdge,
    /// Gauss parameters t ∈ (0,1) along the local edge direction.
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub ref_points: Vec<[f64; 2]>,
    /// Scalar basis traces, `[point][dof]`.
    pub sc_vals: Vec<Vec<f64>>,
    /// RT basis reference values, `[point][dof]`.
    pub rt_vals: Vec<Vec<[f64; 2]>>,
}

/// Reference-element context shared by all elements of a mesh: bases and
/// tabulated quadrature rules for a fixed (element kind, degree).
#[derive(Debug, Clone)]
pub struct FeContext {
    pub kind: ElementKind,
    pub p: usize,
    pub scalar: ScalarBasis,
    pub rt: RtBasis,
    /// High-order rule for geometric/bilinear terms (exact past 2p+2).
    pub interior: RuleTab,
    /// Mass rule for the nonlinear latent terms; carries the quadrature-space
    /// guarantee where available (p=0 triangles, tensor rules on rectangles).
    pub mass: RuleTab,
    pub edges: Vec<EdgeTab>,
}

impl FeContext {
    pub fn new(kind: ElementKind, p: usize) -> Result<Self> {
        check_degree(kind, p)?;
        let scalar = ScalarBasis::new(kind, p)?;
        let rt = RtBasis::new(kind, p)?;
        // Two orders beyond polynomial exactness: variable coefficients make
        // the integrands rational, and the extra points push the consistency
        // error well below the discretization error.
        let interior_rule = match kind {
            ElementKind::Triangle => rule_triangle_any(2 * p + 6),
            ElementKind::Rectangle => tensor_rule_rect_points(p + 4),
        };
        let mass_rule = match kind {
            ElementKind::Triangle => match p {
                0 => triangle_centroid_rule(),
                1 => vertex_augmented_triangle(),
                _ => rule_triangle_any(2 * p + 2),
            },
            ElementKind::Rectangle => tensor_rule_rect(p),
        };
        let interior = RuleTab::new(interior_rule, &scalar, &rt);
        let mass = RuleTab::new(mass_rule, &scalar, &rt);

        let (t, w) = gauss_legendre_1d(p + 3);
        let edges = reference_edges(kind)
            .into_iter()
            .map(|edge| {
                let ref_points: Vec<[f64; 2]> = t
                    .iter()
                    .map(|&ti| {
                        [
                            edge.start[0] + ti * edge.dir[0],
                            edge.start[1] + ti * edge.dir[1],
                        ]
                    })
                    .collect();
                let mut sc_vals = Vec::with_capacity(ref_points.len());
                let mut rt_vals = Vec::with_capacity(ref_points.len());
                for &pt in &ref_points {
                    sc_vals.push(scalar.eval(pt).0);
                    rt_vals.push(rt.eval(pt).0);
                }
                EdgeTab {
                    edge,
                    t: t.clone(),
                    w: w.clone(),
                    ref_points,
                    sc_vals,
                    rt_vals,
                }
            })
            .collect();

        Ok(FeContext {
            kind,
            p,
            scalar,
            rt,
            interior,
            mass,
            edges,
        })
    }

    /// Scalar dofs per element.
    pub fn nu(&self) -> usize {
        self.scalar.ndofs()
    }

    /// Flux dofs per element.
    pub fn nq(&self) -> usize {
        self.rt.ndofs()
    }

    /// Facet dofs per facet.
    pub fn nm(&self) -> usize {
        self.p + 1
    }
}
