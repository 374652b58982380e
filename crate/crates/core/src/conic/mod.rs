//! A small conic modeling layer: Hermitian PSD matrix variables, real
//! scalars, affine constraints, exponential epigraphs and Hermitian LMIs.
//!
//! Problems are built over complex data, lowered to a real symmetric form by
//! [`embed_hermitian`] and handed to the solver adapter in [`backend`].

mod backend;
mod embed;

pub use backend::{solve, SolveSettings};
pub use embed::{embed_hermitian, embed_matrix, extract_hermitian, RealAffine, RealConstraint, RealProblem, TRACE_SCALE};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat, CVec, C64};

/// Handle of a Hermitian PSD matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HermVar(pub(crate) usize);

/// Handle of a real scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScalarVar(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Free,
    Nonneg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermVarInfo {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVarInfo {
    pub name: String,
    pub sign: Sign,
}

/// `constant + Σ a_k s_k + Σ Re Tr(C_k X_k)`.
///
/// Trace coefficients are kept Hermitian, so every term is real on
/// Hermitian arguments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    pub scalars: Vec<(ScalarVar, f64)>,
    pub traces: Vec<(HermVar, CMat)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, ..Self::default() }
    }

    pub fn scalar(s: ScalarVar) -> Self {
        Self::default().plus_scalar(s, 1.0)
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn plus_scalar(mut self, s: ScalarVar, a: f64) -> Self {
        self.add_scalar(s, a);
        self
    }

    pub fn add_scalar(&mut self, s: ScalarVar, a: f64) {
        match self.scalars.iter_mut().find(|(v, _)| *v == s) {
            Some((_, c)) => *c += a,
            None => self.scalars.push((s, a)),
        }
    }

    /// Adds `Re Tr(C X)`, with `C` replaced by its Hermitian part.
    pub fn add_trace(&mut self, x: HermVar, c: &CMat) {
        let c = linalg::hermitian_part(c);
        match self.traces.iter_mut().find(|(v, _)| *v == x) {
            Some((_, acc)) => *acc += c,
            None => self.traces.push((x, c)),
        }
    }

    pub fn plus_trace(mut self, x: HermVar, c: &CMat) -> Self {
        self.add_trace(x, c);
        self
    }

    /// Adds `scale · h† X h`.
    pub fn add_quad(&mut self, x: HermVar, h: &CVec, scale: f64) {
        self.add_trace(x, &linalg::real_scale(&linalg::outer(h), scale));
    }

    pub fn add_expr(&mut self, other: &AffineExpr, scale: f64) {
        self.constant += scale * other.constant;
        for &(s, a) in &other.scalars {
            self.add_scalar(s, scale * a);
        }
        for (x, c) in &other.traces {
            self.add_trace(*x, &linalg::real_scale(c, scale));
        }
    }

    pub fn plus_expr(mut self, other: &AffineExpr, scale: f64) -> Self {
        self.add_expr(other, scale);
        self
    }

    pub fn scaled(&self, t: f64) -> Self {
        AffineExpr::default().plus_expr(self, t)
    }

    pub fn eval(&self, a: &Assignment) -> f64 {
        let mut v = self.constant;
        for &(s, c) in &self.scalars {
            v += c * a.scalars[s.0];
        }
        for (x, c) in &self.traces {
            v += linalg::trace_product(c, &a.herm[x.0]);
        }
        v
    }
}

/// One congruence term `coef · E† X E` of an LMI, with `E` of size `dim(X) × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Congruence {
    pub var: HermVar,
    pub coef: f64,
    pub e: CMat,
}

/// `F = C₀ + Σ s_k C_k + Σ coef·E†XE + Σ diag_i(e_i) ⪰ 0`, all terms `d × d`
/// Hermitian; `diagonal` holds trace expressions added to single diagonal
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Lmi {
    pub dim: usize,
    pub constant: CMat,
    pub scalars: Vec<(ScalarVar, CMat)>,
    pub congruences: Vec<Congruence>,
    pub diagonal: Vec<(usize, AffineExpr)>,
}

impl Lmi {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            constant: linalg::zeros(dim),
            scalars: Vec::new(),
            congruences: Vec::new(),
            diagonal: Vec::new(),
        }
    }

    pub fn add_scalar(&mut self, s: ScalarVar, c: CMat) {
        assert_eq!(c.nrows(), self.dim, "LMI scalar coefficient has the wrong size");
        match self.scalars.iter_mut().find(|(v, _)| *v == s) {
            Some((_, acc)) => *acc += c,
            None => self.scalars.push((s, c)),
        }
    }

    pub fn add_congruence(&mut self, var: HermVar, coef: f64, e: CMat) {
        assert_eq!(e.ncols(), self.dim, "LMI congruence has the wrong width");
        self.congruences.push(Congruence { var, coef, e });
    }

    /// Adds an affine expression to entry `(i, i)`.
    pub fn add_to_diagonal(&mut self, i: usize, expr: &AffineExpr) {
        assert!(i < self.dim, "LMI diagonal index out of range");
        self.constant[(i, i)] += C64::new(expr.constant, 0.0);
        let mut unit = linalg::zeros(self.dim);
        unit[(i, i)] = C64::new(1.0, 0.0);
        for &(s, a) in &expr.scalars {
            self.add_scalar(s, linalg::real_scale(&unit, a));
        }
        if !expr.traces.is_empty() {
            let traces = AffineExpr { traces: expr.traces.clone(), ..AffineExpr::default() };
            match self.diagonal.iter_mut().find(|(k, _)| *k == i) {
                Some((_, acc)) => acc.add_expr(&traces, 1.0),
                None => self.diagonal.push((i, traces)),
            }
        }
    }

    pub fn eval(&self, a: &Assignment) -> CMat {
        let mut f = self.constant.clone();
        for (s, c) in &self.scalars {
            f += linalg::real_scale(c, a.scalars[s.0]);
        }
        for t in &self.congruences {
            let x = &a.herm[t.var.0];
            f += linalg::real_scale(&(t.e.adjoint() * x * &t.e), t.coef);
        }
        for (i, e) in &self.diagonal {
            f[(*i, *i)] += C64::new(e.eval(a), 0.0);
        }
        linalg::hermitian_part(&f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// `expr ≥ 0`.
    NonNeg(AffineExpr),
    /// `expr = 0`.
    Zero(AffineExpr),
    /// `exp(exponent) ≤ bound`.
    ExpLe { exponent: AffineExpr, bound: AffineExpr },
    Lmi(Lmi),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub kind: ConstraintKind,
}

impl Constraint {
    /// Label prefix before `[`, used to group constraint instances.
    pub fn family(&self) -> &str {
        self.label.split('[').next().unwrap_or(&self.label)
    }
}

/// A convex problem: minimize an affine objective subject to the
/// constraints, with every Hermitian variable PSD.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProblem {
    pub herm_vars: Vec<HermVarInfo>,
    pub scalar_vars: Vec<ScalarVarInfo>,
    pub objective: AffineExpr,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProblemError {
    #[error("unknown variable in {0}")]
    UnknownVariable(String),
    #[error("dimension mismatch in {0}")]
    Dimension(String),
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn herm_var(&mut self, name: impl Into<String>, dim: usize) -> HermVar {
        self.herm_vars.push(HermVarInfo { name: name.into(), dim });
        HermVar(self.herm_vars.len() - 1)
    }

    pub fn scalar_var(&mut self, name: impl Into<String>, sign: Sign) -> ScalarVar {
        self.scalar_vars.push(ScalarVarInfo { name: name.into(), sign });
        ScalarVar(self.scalar_vars.len() - 1)
    }

    pub fn herm_dim(&self, x: HermVar) -> usize {
        self.herm_vars[x.0].dim
    }

    pub fn set_objective(&mut self, obj: AffineExpr) {
        self.objective = obj;
    }

    pub fn push(&mut self, label: impl Into<String>, kind: ConstraintKind) {
        self.constraints.push(Constraint { label: label.into(), kind });
    }

    /// `lhs ≥ rhs`.
    pub fn ge(&mut self, label: impl Into<String>, lhs: AffineExpr, rhs: &AffineExpr) {
        self.push(label, ConstraintKind::NonNeg(lhs.plus_expr(rhs, -1.0)));
    }

    /// `lhs ≤ rhs`.
    pub fn le(&mut self, label: impl Into<String>, lhs: AffineExpr, rhs: &AffineExpr) {
        self.push(label, ConstraintKind::NonNeg(rhs.clone().plus_expr(&lhs, -1.0)));
    }

    /// `exp(exponent) ≤ bound`; a constant bound becomes the linear
    /// constraint `exponent ≤ ln(bound)`.
    pub fn exp_le(&mut self, label: impl Into<String>, exponent: AffineExpr, bound: AffineExpr) {
        if bound.scalars.is_empty() && bound.traces.is_empty() && bound.constant > 0.0 {
            let rhs = AffineExpr::constant(bound.constant.ln());
            self.le(label, exponent, &rhs);
        } else {
            self.push(label, ConstraintKind::ExpLe { exponent, bound });
        }
    }

    pub fn lmi(&mut self, label: impl Into<String>, lmi: Lmi) {
        self.push(label, ConstraintKind::Lmi(lmi));
    }

    /// Number of constraint instances per family, in first-appearance order.
    pub fn census(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for c in &self.constraints {
            match out.iter_mut().find(|(f, _)| f == c.family()) {
                Some((_, n)) => *n += 1,
                None => out.push((c.family().to_string(), 1)),
            }
        }
        out
    }

    /// Checks that every referenced variable exists and that dimensions agree.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let check_expr = |e: &AffineExpr, ctx: &str| -> Result<(), ProblemError> {
            for (s, _) in &e.scalars {
                if s.0 >= self.scalar_vars.len() {
                    return Err(ProblemError::UnknownVariable(ctx.to_string()));
                }
            }
            for (x, c) in &e.traces {
                let info = self.herm_vars.get(x.0).ok_or_else(|| ProblemError::UnknownVariable(ctx.to_string()))?;
                if c.nrows() != info.dim || c.ncols() != info.dim {
                    return Err(ProblemError::Dimension(ctx.to_string()));
                }
            }
            Ok(())
        };
        check_expr(&self.objective, "objective")?;
        for c in &self.constraints {
            match &c.kind {
                ConstraintKind::NonNeg(e) | ConstraintKind::Zero(e) => check_expr(e, &c.label)?,
                ConstraintKind::ExpLe { exponent, bound } => {
                    check_expr(exponent, &c.label)?;
                    check_expr(bound, &c.label)?;
                }
                ConstraintKind::Lmi(l) => {
                    if l.constant.nrows() != l.dim {
                        return Err(ProblemError::Dimension(c.label.clone()));
                    }
                    for (s, m) in &l.scalars {
                        if s.0 >= self.scalar_vars.len() {
                            return Err(ProblemError::UnknownVariable(c.label.clone()));
                        }
                        if m.nrows() != l.dim {
                            return Err(ProblemError::Dimension(c.label.clone()));
                        }
                    }
                    for t in &l.congruences {
                        let info =
                            self.herm_vars.get(t.var.0).ok_or_else(|| ProblemError::UnknownVariable(c.label.clone()))?;
                        if t.e.nrows() != info.dim || t.e.ncols() != l.dim {
                            return Err(ProblemError::Dimension(c.label.clone()));
                        }
                    }
                    for (i, e) in &l.diagonal {
                        if *i >= l.dim {
                            return Err(ProblemError::Dimension(c.label.clone()));
                        }
                        check_expr(e, &c.label)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Most negative constraint residual of an assignment (PSD parts by
    /// smallest eigenvalue); nonnegative means feasible.
    pub fn min_residual(&self, a: &Assignment) -> f64 {
        let mut worst = f64::INFINITY;
        for c in &self.constraints {
            let r = match &c.kind {
                ConstraintKind::NonNeg(e) => e.eval(a),
                ConstraintKind::Zero(e) => -e.eval(a).abs(),
                ConstraintKind::ExpLe { exponent, bound } => bound.eval(a) - exponent.eval(a).exp(),
                ConstraintKind::Lmi(l) => linalg::lambda_min(&l.eval(a)),
            };
            worst = worst.min(r);
        }
        for x in &a.herm {
            if x.nrows() > 0 {
                worst = worst.min(linalg::lambda_min(x));
            }
        }
        worst
    }
}

/// Values of every variable of a [`ConicProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub herm: Vec<CMat>,
    pub scalars: Vec<f64>,
}

impl Assignment {
    pub fn zeros(p: &ConicProblem) -> Self {
        Self { herm: p.herm_vars.iter().map(|v| linalg::zeros(v.dim)).collect(), scalars: vec![0.0; p.scalar_vars.len()] }
    }

    pub fn herm(&self, x: HermVar) -> &CMat {
        &self.herm[x.0]
    }

    pub fn scalar(&self, s: ScalarVar) -> f64 {
        self.scalars[s.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
    Failed,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, Self::Optimal | Self::Inaccurate)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::Unbounded => "unbounded",
            Self::Inaccurate => "inaccurate",
            Self::Failed => "failed",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub solve_time_s: f64,
    pub backend_status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    /// Present exactly when `status` is optimal or inaccurate.
    pub assignment: Option<Assignment>,
    pub diagnostics: Diagnostics,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn trace_objective_with_weighted_constraint() {
        let mut p = ConicProblem::new();
        let w = p.herm_var("W", 2);
        p.set_objective(AffineExpr::default().plus_trace(w, &linalg::identity(2)));
        let d = CMat::from_diagonal(&CVec::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0)]));
        p.ge("w", AffineExpr::default().plus_trace(w, &d), &AffineExpr::constant(1.0));
        let r = solve(&p, &SolveSettings::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 0.5).abs() < 1e-6, "{}", r.objective);
        let x = r.assignment.unwrap();
        assert!(linalg::hermitian_defect(x.herm(w)) < 1e-9);
    }

    #[test]
    fn exponential_epigraph() {
        let mut p = ConicProblem::new();
        let x = p.scalar_var("x", Sign::Free);
        let t = p.scalar_var("t", Sign::Free);
        p.set_objective(AffineExpr::scalar(t));
        p.exp_le("e", AffineExpr::scalar(x), AffineExpr::scalar(t));
        p.ge("x", AffineExpr::scalar(x), &AffineExpr::constant(1.0));
        let r = solve(&p, &SolveSettings::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - std::f64::consts::E).abs() < 1e-6, "{}", r.objective);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = ConicProblem::new();
        let x = p.scalar_var("x", Sign::Free);
        p.set_objective(AffineExpr::scalar(x));
        p.ge("lo", AffineExpr::scalar(x), &AffineExpr::constant(1.0));
        p.le("hi", AffineExpr::scalar(x), &AffineExpr::constant(0.0));
        let r = solve(&p, &SolveSettings::default());
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.assignment.is_none());
    }

    #[test]
    fn unbounded_objective() {
        let mut p = ConicProblem::new();
        let x = p.scalar_var("x", Sign::Free);
        p.set_objective(AffineExpr::scalar(x));
        p.le("hi", AffineExpr::scalar(x), &AffineExpr::constant(0.0));
        let r = solve(&p, &SolveSettings::default());
        assert_eq!(r.status, SolveStatus::Unbounded);
    }

    #[test]
    fn complex_lmi_is_respected() {
        // min t s.t. [[t, z],[z*, 1]] ⪰ 0 with z = (1 + i)·s and s ≥ 1.
        let mut p = ConicProblem::new();
        let t = p.scalar_var("t", Sign::Free);
        let s = p.scalar_var("s", Sign::Free);
        p.set_objective(AffineExpr::scalar(t));
        p.ge("s", AffineExpr::scalar(s), &AffineExpr::constant(1.0));
        let mut l = Lmi::new(2);
        l.constant[(1, 1)] = c(1.0, 0.0);
        let mut et = linalg::zeros(2);
        et[(0, 0)] = c(1.0, 0.0);
        l.add_scalar(t, et);
        let mut es = linalg::zeros(2);
        es[(0, 1)] = c(1.0, 1.0);
        es[(1, 0)] = c(1.0, -1.0);
        l.add_scalar(s, es);
        p.lmi("schur", l);
        let r = solve(&p, &SolveSettings::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 2.0).abs() < 1e-6, "{}", r.objective);
    }

    #[test]
    fn congruence_lmi_matches_quadratic_form() {
        // max h† X h subject to Tr X ≤ 1 written through t ≤ h†Xh as a 1×1 LMI.
        let h = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let mut p = ConicProblem::new();
        let x = p.herm_var("X", 2);
        let t = p.scalar_var("t", Sign::Free);
        p.set_objective(AffineExpr::default().plus_scalar(t, -1.0));
        p.le("tr", AffineExpr::default().plus_trace(x, &linalg::identity(2)), &AffineExpr::constant(1.0));
        let mut l = Lmi::new(1);
        l.add_congruence(x, 1.0, CMat::from_column_slice(2, 1, h.as_slice()));
        l.add_scalar(t, CMat::from_element(1, 1, c(-1.0, 0.0)));
        p.lmi("t", l);
        let r = solve(&p, &SolveSettings::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective + 2.0).abs() < 1e-6, "{}", r.objective);
    }

    #[test]
    fn validate_rejects_foreign_variables() {
        let mut p = ConicProblem::new();
        let _ = p.herm_var("W", 2);
        p.ge("bad", AffineExpr::default().plus_trace(HermVar(3), &linalg::identity(2)), &AffineExpr::constant(0.0));
        assert!(matches!(p.validate(), Err(ProblemError::UnknownVariable(_))));
        let r = solve(&p, &SolveSettings::default());
        assert_eq!(r.status, SolveStatus::Failed);
    }

    #[test]
    fn diagonal_expression_in_lmi() {
        // [[tr(X) - 1]] ⪰ 0 via add_to_diagonal.
        let mut p = ConicProblem::new();
        let x = p.herm_var("X", 2);
        p.set_objective(AffineExpr::default().plus_trace(x, &linalg::identity(2)));
        let mut l = Lmi::new(1);
        let d = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0, 0.0), c(3.0, 0.0)]));
        l.add_to_diagonal(0, &AffineExpr::constant(-1.0).plus_trace(x, &d));
        p.lmi("d", l);
        let r = solve(&p, &SolveSettings::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 1.0 / 3.0).abs() < 1e-6, "{}", r.objective);
    }
}
