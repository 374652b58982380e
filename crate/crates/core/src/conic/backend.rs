//! Adapter to the Clarabel interior-point solver; the only module that
//! names the backend.
//!
//! Each embedded Hermitian block of complex size `n` is parametrized by `n²`
//! reals (the diagonal, then real and imaginary parts of the strict upper
//! triangle), so the structure `[[X, −Y], [Y, X]]` holds by construction.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, ExponentialConeT, IPSolver, NonnegativeConeT, PSDTriangleConeT,
    SolverStatus, SupportedConeT, ZeroConeT,
};

use super::embed::{embed_hermitian, RMat, RealAffine, RealConstraint, RealProblem, TRACE_SCALE};
use super::{Assignment, ConicProblem, Diagnostics, Sign, SolveResult, SolveStatus};
use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub feas_tol: f64,
    pub rel_gap: f64,
    pub max_iter: u32,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self { feas_tol: 1e-7, rel_gap: 1e-7, max_iter: 100_000 }
    }
}

/// Entries `(row, col, value)` of `∂Z/∂x_p` for the parameters of one block.
fn block_basis(n: usize) -> Vec<Vec<(usize, usize, f64)>> {
    let mut basis = Vec::with_capacity(n * n);
    for i in 0..n {
        basis.push(vec![(i, i, 1.0), (n + i, n + i, 1.0)]);
    }
    for j in 0..n {
        for i in 0..j {
            basis.push(vec![(i, j, 1.0), (j, i, 1.0), (n + i, n + j, 1.0), (n + j, n + i, 1.0)]);
            // Imaginary part y of X_ij, so Y_ij = y and Y_ji = −y.
            basis.push(vec![(n + i, j, 1.0), (n + j, i, -1.0), (i, n + j, -1.0), (j, n + i, 1.0)]);
        }
    }
    basis
}

fn params_to_hermitian(n: usize, x: &[f64]) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(x[i], 0.0);
    }
    let mut k = n;
    for j in 0..n {
        for i in 0..j {
            let z = C64::new(x[k], x[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Position of `(r, c)`, `r ≤ c`, in the column-major upper-triangle vector.
fn svec_index(r: usize, c: usize) -> usize {
    c * (c + 1) / 2 + r
}

struct Layout {
    block_offset: Vec<usize>,
    scalar_offset: usize,
    n_vars: usize,
    bases: Vec<Vec<Vec<(usize, usize, f64)>>>,
}

impl Layout {
    fn new(p: &RealProblem) -> Self {
        let mut block_offset = Vec::with_capacity(p.blocks.len());
        let mut off = 0;
        for &n in &p.blocks {
            block_offset.push(off);
            off += n * n;
        }
        let bases = p.blocks.iter().map(|&n| block_basis(n)).collect();
        Self { block_offset, scalar_offset: off, n_vars: off + p.scalars.len(), bases }
    }
}

/// Sparse row builder for `A x + s = b`. Auxiliary columns follow the
/// problem's own variables.
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    aux_base: usize,
    aux_count: usize,
}

/// One congruence `coef · Êᵀ Z Ê` with `Z` given by its column offset and basis.
struct Term<'a> {
    offset: usize,
    basis: &'a [Vec<(usize, usize, f64)>],
    coef: f64,
    e: &'a RMat,
}

fn affine_coefs(layout: &Layout, e: &RealAffine) -> Vec<(usize, f64)> {
    let mut coefs: Vec<(usize, f64)> = Vec::new();
    for &(s, a) in &e.scalars {
        coefs.push((layout.scalar_offset + s, a));
    }
    for (b, c) in &e.blocks {
        let off = layout.block_offset[*b];
        for (p, entries) in layout.bases[*b].iter().enumerate() {
            let a: f64 = entries.iter().map(|&(r, q, val)| val * c[(q, r)]).sum::<f64>() * TRACE_SCALE;
            if a != 0.0 {
                coefs.push((off + p, a));
            }
        }
    }
    coefs
}

impl Rows {
    fn new(aux_base: usize) -> Self {
        Self { i: Vec::new(), j: Vec::new(), v: Vec::new(), b: Vec::new(), cones: Vec::new(), aux_base, aux_count: 0 }
    }

    fn n_rows(&self) -> usize {
        self.b.len()
    }

    fn n_cols(&self) -> usize {
        self.aux_base + self.aux_count
    }

    fn fresh_columns(&mut self, k: usize) -> usize {
        let start = self.aux_base + self.aux_count;
        self.aux_count += k;
        start
    }

    /// Appends `s = constant + Σ a_c x_c`.
    fn linear_row(&mut self, constant: f64, coefs: &[(usize, f64)]) {
        let row = self.n_rows();
        for &(col, a) in coefs {
            self.i.push(row);
            self.j.push(col);
            self.v.push(-a);
        }
        self.b.push(constant);
    }

    /// Appends `s = expr(x)` for one affine row.
    fn affine_row(&mut self, layout: &Layout, e: &RealAffine) {
        self.linear_row(e.constant, &affine_coefs(layout, e));
    }

    fn push_cone(&mut self, cone: SupportedConeT<f64>) {
        // Merge runs of same-type scalar cones.
        match (self.cones.last_mut(), &cone) {
            (Some(SupportedConeT::NonnegativeConeT(k)), SupportedConeT::NonnegativeConeT(m)) => *k += m,
            (Some(SupportedConeT::ZeroConeT(k)), SupportedConeT::ZeroConeT(m)) => *k += m,
            _ => self.cones.push(cone),
        }
    }

    /// A free column tied to `e(x)` by an equality row.
    fn linked_scalar(&mut self, layout: &Layout, e: &RealAffine) -> usize {
        let col = self.fresh_columns(1);
        let mut coefs = affine_coefs(layout, e);
        coefs.push((col, -1.0));
        self.linear_row(e.constant, &coefs);
        self.push_cone(ZeroConeT(1));
        col
    }

    /// Appends `s = svec(M(x))` for a real symmetric affine matrix.
    fn psd_rows(
        &mut self,
        layout: &Layout,
        dim: usize,
        constant: &RMat,
        scalars: &[(usize, RMat)],
        terms: &[Term<'_>],
        diagonal: &[(usize, usize)],
        block_identity: Option<usize>,
    ) {
        let base = self.n_rows();
        let len = dim * (dim + 1) / 2;
        let s2 = std::f64::consts::SQRT_2;
        let weight = |r: usize, c: usize| if r == c { 1.0 } else { s2 };
        for c in 0..dim {
            for r in 0..=c {
                self.b.push(weight(r, c) * constant[(r, c)]);
            }
        }
        let emit = |row: usize, col: usize, val: f64, i: &mut Vec<usize>, j: &mut Vec<usize>, v: &mut Vec<f64>| {
            if val != 0.0 {
                i.push(base + row);
                j.push(col);
                v.push(-val);
            }
        };
        for (s, m) in scalars {
            let col = layout.scalar_offset + s;
            for c in 0..dim {
                for r in 0..=c {
                    emit(svec_index(r, c), col, weight(r, c) * m[(r, c)], &mut self.i, &mut self.j, &mut self.v);
                }
            }
        }
        for &(k, col) in diagonal {
            emit(svec_index(k, k), col, 1.0, &mut self.i, &mut self.j, &mut self.v);
        }
        if let Some(b) = block_identity {
            let off = layout.block_offset[b];
            for (p, entries) in layout.bases[b].iter().enumerate() {
                for &(r, c, val) in entries {
                    if r <= c {
                        emit(svec_index(r, c), off + p, weight(r, c) * val, &mut self.i, &mut self.j, &mut self.v);
                    }
                }
            }
        }
        let mut acc = vec![0.0; len];
        for t in terms {
            let e = t.e;
            for (p, entries) in t.basis.iter().enumerate() {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for &(ra, cb, val) in entries {
                    // coef · val · Ê[ra, :]ᵀ Ê[cb, :]
                    for c in 0..dim {
                        let ec = e[(cb, c)];
                        if ec == 0.0 {
                            continue;
                        }
                        for r in 0..=c {
                            let er = e[(ra, r)];
                            if er != 0.0 {
                                acc[svec_index(r, c)] += t.coef * val * er * ec;
                            }
                        }
                    }
                }
                for c in 0..dim {
                    for r in 0..=c {
                        let k = svec_index(r, c);
                        emit(k, t.offset + p, weight(r, c) * acc[k], &mut self.i, &mut self.j, &mut self.v);
                    }
                }
            }
        }
        self.cones.push(PSDTriangleConeT(dim));
    }

    /// An LMI whose diagonal expressions become linked scalars, so the cone
    /// does not touch every block inside those expressions.
    fn lmi_rows(
        &mut self,
        layout: &Layout,
        dim: usize,
        constant: &RMat,
        scalars: &[(usize, RMat)],
        congruences: &[(usize, f64, RMat)],
        diagonal: &[(usize, RealAffine)],
    ) {
        let half = dim / 2;
        let mut diag_cols = Vec::new();
        for (i, e) in diagonal {
            let col = self.linked_scalar(layout, e);
            diag_cols.push((*i, col));
            diag_cols.push((half + *i, col));
        }
        let terms: Vec<Term<'_>> = congruences
            .iter()
            .map(|(b, coef, e)| Term { offset: layout.block_offset[*b], basis: &layout.bases[*b], coef: *coef, e })
            .collect();
        self.psd_rows(layout, dim, constant, scalars, &terms, &diag_cols, None);
    }
}

fn assemble(p: &RealProblem, layout: &Layout) -> Rows {
    let mut rows = Rows::new(layout.n_vars);
    for (k, &n) in p.blocks.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let zero = RMat::zeros(2 * n, 2 * n);
        rows.psd_rows(layout, 2 * n, &zero, &[], &[], &[], Some(k));
    }
    for (s, sign) in p.scalars.iter().enumerate() {
        if *sign == Sign::Nonneg {
            rows.affine_row(layout, &RealAffine { constant: 0.0, scalars: vec![(s, 1.0)], blocks: vec![] });
            rows.push_cone(NonnegativeConeT(1));
        }
    }
    for c in &p.constraints {
        match c {
            RealConstraint::NonNeg(e) => {
                rows.affine_row(layout, e);
                rows.push_cone(NonnegativeConeT(1));
            }
            RealConstraint::Zero(e) => {
                rows.affine_row(layout, e);
                rows.push_cone(ZeroConeT(1));
            }
            RealConstraint::Exp { x, z } => {
                rows.affine_row(layout, x);
                rows.affine_row(layout, &RealAffine::constant_only(1.0));
                rows.affine_row(layout, z);
                rows.cones.push(ExponentialConeT());
            }
            RealConstraint::Lmi { dim, constant, scalars, congruences, diagonal } => {
                rows.lmi_rows(layout, *dim, constant, scalars, congruences, diagonal);
            }
        }
    }
    rows
}

impl RealAffine {
    fn constant_only(c: f64) -> Self {
        Self { constant: c, scalars: Vec::new(), blocks: Vec::new() }
    }
}

fn objective_vector(p: &RealProblem, layout: &Layout) -> Vec<f64> {
    let mut q = vec![0.0; layout.n_vars];
    for &(s, a) in &p.objective.scalars {
        q[layout.scalar_offset + s] += a;
    }
    for (b, c) in &p.objective.blocks {
        let off = layout.block_offset[*b];
        for (k, entries) in layout.bases[*b].iter().enumerate() {
            q[off + k] += TRACE_SCALE * entries.iter().map(|&(r, col, val)| val * c[(col, r)]).sum::<f64>();
        }
    }
    q
}

fn map_status(status: SolverStatus, r_prim: f64) -> SolveStatus {
    match status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations
        | SolverStatus::MaxTime
        | SolverStatus::InsufficientProgress
        | SolverStatus::NumericalError => {
            if r_prim.is_finite() && r_prim <= 1e-5 {
                SolveStatus::Inaccurate
            } else {
                SolveStatus::Failed
            }
        }
        SolverStatus::Unsolved | SolverStatus::CallbackTerminated => SolveStatus::Failed,
    }
}

fn failed(msg: String) -> SolveResult {
    SolveResult {
        status: SolveStatus::Failed,
        objective: f64::NAN,
        assignment: None,
        diagnostics: Diagnostics { backend_status: msg, ..Diagnostics::default() },
    }
}

/// Solves `problem`; backend errors and panics become `SolveStatus::Failed`.
pub fn solve(problem: &ConicProblem, settings: &SolveSettings) -> SolveResult {
    if let Err(e) = problem.validate() {
        return failed(e.to_string());
    }
    let started = Instant::now();
    let real = embed_hermitian(problem);
    let layout = Layout::new(&real);
    let rows = assemble(&real, &layout);
    let mut q = objective_vector(&real, &layout);
    let m = rows.n_rows();
    let n = rows.n_cols();
    q.resize(n, 0.0);
    let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
    let p = CscMatrix::zeros((n, n));
    let built = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(settings.feas_tol)
        .tol_gap_rel(settings.rel_gap)
        .tol_gap_abs(settings.rel_gap * 1e-2)
        .max_iter(settings.max_iter)
        .direct_solve_method("faer".to_string())
        .max_threads(1)
        .build();
    let backend_settings = match built {
        Ok(s) => s,
        Err(e) => return failed(format!("settings: {e:?}")),
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &rows.cones, backend_settings)
            .map_err(|e| format!("setup: {e:?}"))?;
        solver.solve();
        Ok::<_, String>(solver.solution)
    }));
    let sol = match outcome {
        Ok(Ok(sol)) => sol,
        Ok(Err(msg)) => return failed(msg),
        Err(_) => return failed("backend panicked".into()),
    };
    let status = map_status(sol.status, sol.r_prim);
    let diagnostics = Diagnostics {
        iterations: sol.iterations,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        solve_time_s: started.elapsed().as_secs_f64(),
        backend_status: format!("{:?}", sol.status),
    };
    if !status.has_solution() || sol.x.iter().any(|v| !v.is_finite()) {
        let status = if status.has_solution() { SolveStatus::Failed } else { status };
        return SolveResult { status, objective: f64::NAN, assignment: None, diagnostics };
    }
    let herm = real
        .blocks
        .iter()
        .enumerate()
        .map(|(k, &nb)| {
            let off = layout.block_offset[k];
            params_to_hermitian(nb, &sol.x[off..off + nb * nb])
        })
        .collect();
    let scalars = sol.x[layout.scalar_offset..].to_vec();
    let assignment = Assignment { herm, scalars };
    let objective = problem.objective.eval(&assignment);
    SolveResult { status, objective, assignment: Some(assignment), diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_reconstructs_embedding() {
        let n = 3;
        let x: Vec<f64> = (0..n * n).map(|k| k as f64 * 0.3 - 1.0).collect();
        let herm = params_to_hermitian(n, &x);
        let mut z = RMat::zeros(2 * n, 2 * n);
        for (p, entries) in block_basis(n).iter().enumerate() {
            for &(r, c, v) in entries {
                z[(r, c)] += v * x[p];
            }
        }
        assert!((z - super::super::embed_matrix(&herm)).amax() < 1e-15);
    }

    #[test]
    fn svec_indexing_is_column_major_upper() {
        assert_eq!(svec_index(0, 0), 0);
        assert_eq!(svec_index(0, 1), 1);
        assert_eq!(svec_index(1, 1), 2);
        assert_eq!(svec_index(0, 2), 3);
    }
}
