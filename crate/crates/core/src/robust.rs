//! Designs that stay feasible for every channel in the CSI uncertainty balls.
//!
//! Only the eavesdropping links `q_e` (PBS → secondary EHR) and `f_e`
//! (CBS → primary EHR) are uncertain. Each semi-infinite constraint
//! `c₀ ± h†Xh ≥ 0 for all ‖h − h̄‖ ≤ r` becomes one LMI with a nonnegative
//! multiplier.

use serde::{Deserialize, Serialize};

use crate::conic::{AffineExpr, ConicProblem, HermVar, Lmi, ScalarVar, Sign, SolveSettings};
use crate::formulation::{self, BuildOptions, Built, SCAAnchors, Scheme};
use crate::linalg::{self, CMat, CVec, C64};
use crate::penalty::PenaltyState;
use crate::physics::{verify_solution, BeamformingSolution, ConstraintRecord, PhysicsError, VerificationReport};
use crate::scenario::{child_seed, sample_perturbation_with, BallSampling, ChannelSet, ScenarioConfig};
use crate::sca::{run_pipeline, Algorithm, RunOptions, SolveReport};

/// Estimated eavesdropping channels and the radii of their error balls.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel {
    pub q_e_nominal: Vec<CVec>,
    pub f_e_nominal: Vec<Vec<CVec>>,
    pub radius_q: Vec<f64>,
    pub radius_f: Vec<Vec<f64>>,
}

impl UncertaintyModel {
    pub fn from_config(ch: &ChannelSet, cfg: &ScenarioConfig) -> Self {
        Self {
            q_e_nominal: ch.q_e.clone(),
            f_e_nominal: ch.f_e.clone(),
            radius_q: cfg.radius_q.clone(),
            radius_f: cfg.radius_f.clone(),
        }
    }

    pub fn is_valid(&self, cfg: &ScenarioConfig) -> bool {
        let radii_ok = self.radius_q.iter().chain(self.radius_f.iter().flatten()).all(|&r| r >= 0.0 && r.is_finite());
        radii_ok
            && self.q_e_nominal.len() == cfg.k_ehr_secondary
            && self.radius_q.len() == cfg.k_ehr_secondary
            && self.q_e_nominal.iter().all(|q| q.len() == cfg.n_pt)
            && self.f_e_nominal.len() == cfg.m_clusters
            && self.radius_f.len() == cfg.m_clusters
            && self.f_e_nominal.iter().zip(&self.radius_f).all(|(row, r)| {
                row.len() == cfg.k_ehr_per_cluster && r.len() == row.len() && row.iter().all(|f| f.len() == cfg.n_st)
            })
    }
}

/// S-Procedure multipliers and the CBS-leakage bounds of a robust solution,
/// keyed by the variable names of the built problem.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RobustSlack {
    pub multipliers: Vec<(String, f64)>,
    pub theta: Vec<(String, f64)>,
    pub o: Vec<(String, f64)>,
}

impl RobustSlack {
    pub fn from_solution(built: &Built, a: &crate::conic::Assignment) -> Self {
        let named = |prefix: &str| {
            built
                .problem
                .scalar_vars
                .iter()
                .enumerate()
                .filter(|(_, v)| v.name.starts_with(prefix))
                .map(|(i, v)| (v.name.clone(), a.scalars[i]))
                .collect::<Vec<_>>()
        };
        let multipliers =
            built.multipliers.iter().map(|&s| (built.problem.scalar_vars[s.0].name.clone(), a.scalar(s))).collect();
        Self { multipliers, theta: named("theta["), o: named("o[") }
    }

    pub fn min_multiplier(&self) -> f64 {
        self.multipliers.iter().map(|m| m.1).fold(f64::INFINITY, f64::min)
    }
}

fn ball_corner(n: usize, nominal: &CVec) -> CMat {
    let mut e = CMat::zeros(n, n + 1);
    for i in 0..n {
        e[(i, i)] = C64::new(1.0, 0.0);
        e[(i, n)] = nominal[i];
    }
    e
}

fn multiplier_pattern(n: usize, radius: f64) -> CMat {
    let mut d = linalg::zeros(n + 1);
    for i in 0..n {
        d[(i, i)] = C64::new(1.0, 0.0);
    }
    d[(n, n)] = C64::new(-radius * radius, 0.0);
    d
}

/// `[[ςI + A, b], [b†, c − ς r²]] ⪰ 0` with a fresh multiplier `ς ≥ 0`,
/// certifying `z†Az + 2 Re(b†z) + c ≥ 0` on `‖z‖ ≤ radius`.
pub fn sprocedure_lmi(p: &mut ConicProblem, a: &CMat, b: &CVec, c: f64, radius: f64) -> (Lmi, ScalarVar) {
    let n = b.len();
    let s = p.scalar_var(format!("sproc[{}]", p.scalar_vars.len()), Sign::Nonneg);
    let mut lmi = Lmi::new(n + 1);
    for i in 0..n {
        for j in 0..n {
            lmi.constant[(i, j)] = a[(i, j)];
        }
        lmi.constant[(i, n)] = b[i];
        lmi.constant[(n, i)] = b[i].conj();
    }
    lmi.constant[(n, n)] = C64::new(c, 0.0);
    lmi.add_scalar(s, multiplier_pattern(n, radius));
    (lmi, s)
}

/// The LMI certifying `corner + sign · h†(Σ c_k X_k)h ≥ 0` for every
/// `‖h − nominal‖ ≤ radius`, with `mult ≥ 0` the S-Procedure multiplier.
///
/// With `E = [I | h̄]` the quadratic is `[z; 1]† E†XE [z; 1]`, so the block
/// is `sign·E†XE + diag(ςI, corner − ς r²)`.
pub(crate) fn ball_lmi(
    terms: &[(HermVar, f64)],
    nominal: &CVec,
    sign: f64,
    corner: &AffineExpr,
    radius: f64,
    mult: ScalarVar,
) -> Lmi {
    let n = nominal.len();
    let e = ball_corner(n, nominal);
    let mut lmi = Lmi::new(n + 1);
    for &(x, c) in terms {
        lmi.add_congruence(x, sign * c, e.clone());
    }
    lmi.add_scalar(mult, multiplier_pattern(n, radius));
    lmi.add_to_diagonal(n, corner);
    lmi
}

/// The robust penalized subproblem for NOMA with cooperative jamming.
pub fn build_p6(
    ch_nominal: &ChannelSet,
    cfg: &ScenarioConfig,
    anchors: &SCAAnchors,
    pstate: &PenaltyState,
) -> Result<Built, PhysicsError> {
    let opts = BuildOptions { robust: true, penalty: Some(pstate), ..BuildOptions::new(Scheme::Noma) };
    formulation::build(ch_nominal, cfg, std::slice::from_ref(anchors), opts)
}

pub fn run_robust(ch_nominal: &ChannelSet, cfg: &ScenarioConfig) -> SolveReport {
    run_robust_with(ch_nominal, cfg, &SolveSettings::default())
}

pub fn run_robust_with(ch_nominal: &ChannelSet, cfg: &ScenarioConfig, settings: &SolveSettings) -> SolveReport {
    let opts = RunOptions { robust: true, settings: settings.clone(), ..RunOptions::new(Scheme::Noma, Algorithm::Penalty) };
    run_pipeline(ch_nominal, cfg, &opts)
}

/// Entry-wise minimum of several reports over the same constraint list.
fn merge_min(acc: &mut VerificationReport, next: VerificationReport) {
    for (a, b) in acc.records.iter_mut().zip(next.records) {
        if b.slack < a.slack {
            *a = ConstraintRecord { name: a.name.clone(), ..b };
        }
    }
}

/// `verify_solution` on `n_samples` perturbed channel sets; records keep the
/// worst slack seen. Odd samples sit on the ball surfaces.
pub fn worst_case_check(
    sol: &BeamformingSolution,
    ch_nominal: &ChannelSet,
    cfg: &ScenarioConfig,
    n_samples: usize,
    seed: u64,
) -> Result<VerificationReport, PhysicsError> {
    let mut acc = verify_solution(sol, ch_nominal, cfg)?;
    for s in 0..n_samples {
        let mode = if s % 2 == 1 { BallSampling::Surface } else { BallSampling::Uniform };
        let ch = sample_perturbation_with(ch_nominal, cfg, child_seed(seed, &[s as u64]), mode);
        merge_min(&mut acc, verify_solution(sol, &ch, cfg)?);
    }
    Ok(acc)
}

/// Secrecy and harvesting families only (the PSD records do not depend on
/// the channels).
pub fn channel_dependent_min_slack(report: &VerificationReport) -> f64 {
    report.records.iter().filter(|r| r.family() != "C6").map(|r| r.slack).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, SolveStatus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lmi_feasible(a: &CMat, b: &CVec, c: f64, r: f64) -> bool {
        let mut p = ConicProblem::new();
        let (lmi, _) = sprocedure_lmi(&mut p, a, b, c, r);
        p.lmi("sproc", lmi);
        let res = solve(&p, &SolveSettings::default());
        match res.status {
            SolveStatus::Optimal | SolveStatus::Inaccurate => true,
            SolveStatus::Infeasible => false,
            s => panic!("unexpected status {s}"),
        }
    }

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, C64::new(x, 0.0))
    }

    #[test]
    fn zero_data_reduces_to_the_constant() {
        let zero = CVec::zeros(1);
        assert!(lmi_feasible(&scalar(0.0), &zero, 1.0, 0.0));
        assert!(!lmi_feasible(&scalar(0.0), &zero, -1.0, 0.0));
        assert!(lmi_feasible(&scalar(0.0), &zero, 1.0, 1.0));
    }

    #[test]
    fn concave_quadratic_on_the_unit_interval() {
        let zero = CVec::zeros(1);
        assert!(lmi_feasible(&scalar(-1.0), &zero, 2.0, 1.0));
        assert!(!lmi_feasible(&scalar(-1.0), &zero, 0.5, 1.0));
    }

    /// Minimum of the quadratic over a polar grid of the complex ball.
    fn brute_min(a: &CMat, b: &CVec, c: f64, r: f64) -> f64 {
        let n = b.len();
        let f = |z: &CVec| (z.adjoint() * a * z)[(0, 0)].re + 2.0 * (b.adjoint() * z)[(0, 0)].re + c;
        let mut best = f64::INFINITY;
        let steps = 24;
        let radial = 12;
        if n == 1 {
            for ir in 0..=radial {
                let rad = r * ir as f64 / radial as f64;
                for it in 0..steps {
                    let th = std::f64::consts::TAU * it as f64 / steps as f64;
                    best = best.min(f(&CVec::from_vec(vec![C64::from_polar(rad, th)])));
                }
            }
        } else {
            // Two complex coordinates, parametrized by their moduli and phases.
            let coarse = 10;
            for ir in 0..=radial {
                let rad = r * ir as f64 / radial as f64;
                for ia in 0..=coarse {
                    let ang = std::f64::consts::FRAC_PI_2 * ia as f64 / coarse as f64;
                    for p1 in 0..steps {
                        for p2 in 0..steps {
                            let t1 = std::f64::consts::TAU * p1 as f64 / steps as f64;
                            let t2 = std::f64::consts::TAU * p2 as f64 / steps as f64;
                            let z = CVec::from_vec(vec![
                                C64::from_polar(rad * ang.cos(), t1),
                                C64::from_polar(rad * ang.sin(), t2),
                            ]);
                            best = best.min(f(&z));
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn lmi_feasibility_agrees_with_grid_minimization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 50 {
            let n = if checked % 2 == 0 { 1 } else { 2 };
            let g = CMat::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let a = linalg::hermitian_part(&g) * C64::new(2.0, 0.0);
            let b = CVec::from_fn(n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let r = rng.random_range(0.2..1.5);
            let c = rng.random_range(-1.0..2.0);
            let m = brute_min(&a, &b, c, r);
            // The grid over-estimates the minimum slightly; skip near-boundary cases.
            if m.abs() < 0.05 {
                continue;
            }
            assert_eq!(lmi_feasible(&a, &b, c, r), m >= 0.0, "n={n} c={c} r={r} grid min {m}");
            checked += 1;
        }
    }

    #[test]
    fn ball_lmi_block_has_one_extra_row() {
        let mut p = ConicProblem::new();
        let x = p.herm_var("X", 3);
        let s = p.scalar_var("s", Sign::Nonneg);
        let h = CVec::from_element(3, C64::new(1.0, 0.0));
        let lmi = ball_lmi(&[(x, 1.0)], &h, 1.0, &AffineExpr::constant(1.0), 0.1, s);
        assert_eq!(lmi.dim, 4);
    }
}
