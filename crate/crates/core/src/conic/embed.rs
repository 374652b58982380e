//! Lowering of complex Hermitian problems to real symmetric form.
//!
//! A Hermitian `X + iY` becomes the real symmetric block `[[X, −Y], [Y, X]]`.
//! The map is multiplicative and sends `A†` to the transpose, so congruences
//! and PSD-ness carry over unchanged, while traces double. Every trace
//! functional of the real form is therefore evaluated with [`TRACE_SCALE`].

use nalgebra::DMatrix;

use super::{Assignment, ConicProblem, ConstraintKind, Sign};
use crate::linalg::{CMat, C64};

/// Factor applied to `Tr(embed(C) · embed(X))` to recover `Re Tr(C X)`.
pub const TRACE_SCALE: f64 = 0.5;

pub type RMat = DMatrix<f64>;

/// `[[Re C, −Im C], [Im C, Re C]]`; works for rectangular `C`.
pub fn embed_matrix(c: &CMat) -> RMat {
    let (n, m) = c.shape();
    RMat::from_fn(2 * n, 2 * m, |i, j| {
        let z = c[(i % n, j % m)];
        match (i < n, j < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Hermitian matrix represented by a real symmetric embedding; a general
/// symmetric `Z` is first projected onto the embedding structure.
pub fn extract_hermitian(z: &RMat) -> CMat {
    let n = z.nrows() / 2;
    let m = CMat::from_fn(n, n, |i, j| {
        let x = 0.5 * (z[(i, j)] + z[(n + i, n + j)]);
        let y = 0.5 * (z[(n + i, j)] - z[(i, n + j)]);
        C64::new(x, y)
    });
    crate::linalg::hermitian_part(&m)
}

/// `constant + Σ a s + TRACE_SCALE · Σ Tr(C Z)` over real symmetric blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealAffine {
    pub constant: f64,
    pub scalars: Vec<(usize, f64)>,
    pub blocks: Vec<(usize, RMat)>,
}

impl RealAffine {
    pub fn eval(&self, blocks: &[RMat], scalars: &[f64]) -> f64 {
        let mut v = self.constant;
        for &(s, a) in &self.scalars {
            v += a * scalars[s];
        }
        for (b, c) in &self.blocks {
            v += TRACE_SCALE * (c.transpose().component_mul(&blocks[*b])).sum();
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RealConstraint {
    NonNeg(RealAffine),
    Zero(RealAffine),
    /// `exp(x) ≤ z`.
    Exp { x: RealAffine, z: RealAffine },
    /// `C₀ + Σ s_k C_k + Σ coef·Êᵀ Z Ê + Σ diag_i(e_i) ⪰ 0`; each complex
    /// diagonal entry `i` of a `d`-dimensional LMI appears at real `i` and `d + i`.
    Lmi {
        dim: usize,
        constant: RMat,
        scalars: Vec<(usize, RMat)>,
        congruences: Vec<(usize, f64, RMat)>,
        diagonal: Vec<(usize, RealAffine)>,
    },
}

/// The real symmetric form of a [`ConicProblem`]. `blocks[k]` is the complex
/// dimension `n` of block `k`; the block itself is `2n × 2n` and always
/// carries the embedding structure.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealProblem {
    pub blocks: Vec<usize>,
    pub scalars: Vec<Sign>,
    pub objective: RealAffine,
    pub constraints: Vec<RealConstraint>,
}

impl RealProblem {
    /// Embedded values of a complex assignment.
    pub fn lift(&self, a: &Assignment) -> Vec<RMat> {
        a.herm.iter().map(embed_matrix).collect()
    }
}

fn embed_affine(e: &super::AffineExpr) -> RealAffine {
    RealAffine {
        constant: e.constant,
        scalars: e.scalars.iter().map(|&(s, a)| (s.0, a)).collect(),
        blocks: e.traces.iter().map(|(x, c)| (x.0, embed_matrix(c))).collect(),
    }
}

/// Real symmetric form of `problem`, preserving every functional value.
pub fn embed_hermitian(problem: &ConicProblem) -> RealProblem {
    let constraints = problem
        .constraints
        .iter()
        .map(|c| match &c.kind {
            ConstraintKind::NonNeg(e) => RealConstraint::NonNeg(embed_affine(e)),
            ConstraintKind::Zero(e) => RealConstraint::Zero(embed_affine(e)),
            ConstraintKind::ExpLe { exponent, bound } => {
                RealConstraint::Exp { x: embed_affine(exponent), z: embed_affine(bound) }
            }
            ConstraintKind::Lmi(l) => RealConstraint::Lmi {
                dim: 2 * l.dim,
                constant: embed_matrix(&l.constant),
                scalars: l.scalars.iter().map(|(s, m)| (s.0, embed_matrix(m))).collect(),
                congruences: l.congruences.iter().map(|t| (t.var.0, t.coef, embed_matrix(&t.e))).collect(),
                diagonal: l.diagonal.iter().map(|(i, e)| (*i, embed_affine(e))).collect(),
            },
        })
        .collect();
    RealProblem {
        blocks: problem.herm_vars.iter().map(|v| v.dim).collect(),
        scalars: problem.scalar_vars.iter().map(|v| v.sign).collect(),
        objective: embed_affine(&problem.objective),
        constraints,
    }
}
