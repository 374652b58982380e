//! Successive convex approximation with semidefinite relaxation, and the
//! iteration driver shared by every pipeline.
//!
//! A run has two phases. Phase 1 minimizes the sum of the slacks added to
//! the tangent constraints until they vanish, which yields anchors at which
//! the subproblem is feasible. Phase 2 then minimizes power, moving every
//! anchor to the tight point of the last solution.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{verify_tdma, TdmaSolution};
use crate::conic::{solve, Assignment, SolveSettings, SolveStatus};
use crate::formulation::{self, zero_anchors, BuildOptions, Built, SCAAnchors, Scheme, MW_PER_W};
use crate::linalg::{self, CMat, CVec, C64};
use crate::penalty::PenaltyState;
use crate::physics::{rank_one_gap, verify_solution, BeamformingSolution, PhysicsError, VerificationReport};
use crate::robust::{channel_dependent_min_slack, worst_case_check, RobustSlack};
use crate::scenario::{child_seed, ChannelSet, ScenarioConfig};

/// Phase 1 stops once the slack sum is at most this value.
pub const PHASE1_SLACK_TOL: f64 = 1e-6;
pub const PHASE1_MAX_ROUNDS: usize = 20;
pub const DEFAULT_RANDOMIZATION_SAMPLES: usize = 200;
pub const DEFAULT_WORST_CASE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// SCA with semidefinite relaxation.
    Sdr,
    /// SCA with the eigenvalue penalty.
    Penalty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub scheme: Scheme,
    pub algorithm: Algorithm,
    pub robust: bool,
    pub settings: SolveSettings,
    /// Gaussian randomization of the final relaxed solution (SDR only).
    pub randomization_samples: Option<usize>,
    /// Sampled worst-case check of robust solutions.
    pub worst_case_samples: usize,
    /// Seed of the randomized post-processing steps.
    pub seed: u64,
}

impl RunOptions {
    pub fn new(scheme: Scheme, algorithm: Algorithm) -> Self {
        Self {
            scheme,
            algorithm,
            robust: false,
            settings: SolveSettings::default(),
            randomization_samples: None,
            worst_case_samples: DEFAULT_WORST_CASE_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    /// Phase 1 did not drive the slacks to zero.
    Infeasible,
    SolverFailure,
    InvalidInput,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max_iterations",
            RunStatus::Infeasible => "infeasible",
            RunStatus::SolverFailure => "solver_failure",
            RunStatus::InvalidInput => "invalid_input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    /// Transmit power of the iterate.
    #[serde(rename = "objective_W")]
    pub objective_w: f64,
    pub max_rank_gap: f64,
    pub solver_status: SolveStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank_gaps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Phase1Record {
    pub found: bool,
    pub rounds: usize,
    pub residual_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedOutcome {
    pub feasible: bool,
    pub power_w: Option<f64>,
    pub solution: Option<BeamformingSolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustInfo {
    pub radius_q: Vec<f64>,
    pub radius_f: Vec<Vec<f64>>,
    pub worst_case_min_slack: Option<f64>,
    pub worst_case_by_family: Vec<(String, f64)>,
    pub min_multiplier: f64,
    pub slack: RobustSlack,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_s: f64,
    pub solver_s: f64,
    pub solves: usize,
}

/// Trajectory and outcome of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub algorithm: Algorithm,
    pub robust: bool,
    pub status: RunStatus,
    pub message: Option<String>,
    pub phase1: Phase1Record,
    pub iterations: Vec<IterationRecord>,
    pub anchor_history: Vec<Vec<SCAAnchors>>,
    /// Final transmit power (time-averaged for TDMA).
    pub power_w: Option<f64>,
    pub max_rank_gap: Option<f64>,
    pub solution: Option<BeamformingSolution>,
    pub tdma_solution: Option<TdmaSolution>,
    pub verification: Option<VerificationReport>,
    pub randomized: Option<RandomizedOutcome>,
    pub robust_info: Option<RobustInfo>,
    pub ell_cap_hit: bool,
    pub timings: Timings,
}

impl SolveReport {
    fn empty(opts: &RunOptions) -> Self {
        Self {
            scheme: opts.scheme,
            algorithm: opts.algorithm,
            robust: opts.robust,
            status: RunStatus::SolverFailure,
            message: None,
            phase1: Phase1Record::default(),
            iterations: Vec::new(),
            anchor_history: Vec::new(),
            power_w: None,
            max_rank_gap: None,
            solution: None,
            tdma_solution: None,
            verification: None,
            randomized: None,
            robust_info: None,
            ell_cap_hit: false,
            timings: Timings::default(),
        }
    }

    /// The run finished its iterations with a usable solution.
    pub fn succeeded(&self) -> bool {
        matches!(self.status, RunStatus::Converged | RunStatus::MaxIterations) && self.power_w.is_some()
    }

    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }

    /// Iteration records only, the stable JSON interface.
    pub fn trajectory_json(&self) -> String {
        serde_json::to_string_pretty(&self.iterations).expect("records serialize")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Rank-one test used throughout: `Tr − λ_max ≤ ϖ·(1 + Tr)`, in milliwatts.
pub fn is_rank_one(w_watts: &CMat, tolerance: f64) -> bool {
    let tr = linalg::trace_re(w_watts) * MW_PER_W;
    rank_one_gap(w_watts).map(|g| g * MW_PER_W <= tolerance * (1.0 + tr)).unwrap_or(false)
}

pub fn all_rank_one(sol: &BeamformingSolution, tolerance: f64) -> bool {
    sol.information_matrices().all(|w| is_rank_one(w, tolerance))
}

/// Projection onto the PSD cone; removes solver round-off.
fn psd_project(m: &CMat) -> CMat {
    let (vals, vecs) = linalg::eigh(m);
    let mut out = linalg::zeros(m.nrows());
    for (k, &v) in vals.iter().enumerate() {
        if v > 0.0 {
            let y = vecs.column(k).into_owned();
            out += linalg::real_scale(&linalg::outer(&y), v);
        }
    }
    out
}

fn project_solution(mut s: BeamformingSolution) -> BeamformingSolution {
    for m in s.w_p.iter_mut().chain(s.sigma_p.iter_mut()).chain(s.w_s.iter_mut()) {
        *m = psd_project(m);
    }
    s.sigma_s = psd_project(&s.sigma_s);
    s
}

/// Outcome of the phase-1 search.
#[derive(Debug, Clone, PartialEq)]
pub struct InitOutcome {
    pub anchors: Vec<SCAAnchors>,
    pub record: Phase1Record,
    /// Covariances (internal units) of the last phase-1 solution.
    pub covariances: Option<Vec<CMat>>,
    pub solver_s: f64,
    pub solves: usize,
}

struct Solved {
    assignment: Assignment,
    status: SolveStatus,
    time: f64,
}

fn timed_solve(built: &Built, settings: &SolveSettings) -> Result<Solved, SolveStatus> {
    let t = Instant::now();
    let res = solve(&built.problem, settings);
    let time = t.elapsed().as_secs_f64();
    match res.assignment {
        Some(a) if res.status.has_solution() => Ok(Solved { assignment: a, status: res.status, time }),
        _ => Err(res.status),
    }
}

/// Phase-1 anchor search for any scheme. Starts from the covariances of the
/// harvesting-only design.
pub fn init_anchors_for(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    scheme: Scheme,
    robust: bool,
    settings: &SolveSettings,
) -> Result<InitOutcome, PhysicsError> {
    let base = BuildOptions { robust, ..BuildOptions::new(scheme) };
    let zeros = zero_anchors(cfg, scheme);
    let mut out = InitOutcome { anchors: zeros.clone(), record: Phase1Record::default(), covariances: None, solver_s: 0.0, solves: 0 };

    let mut eh_only = cfg.clone();
    eh_only.gamma_pu.iter_mut().flatten().for_each(|g| *g = 0.0);
    eh_only.gamma_su.iter_mut().for_each(|g| *g = 0.0);
    let start = formulation::build(ch, &eh_only, &zeros, base)?;
    out.solves += 1;
    let start = match timed_solve(&start, settings) {
        Ok(s) => {
            out.solver_s += s.time;
            s.assignment
        }
        Err(_) => {
            out.record.residual_slack = f64::INFINITY;
            return Ok(out);
        }
    };
    let shape = formulation::build(ch, cfg, &zeros, base)?;
    let mut anchors = shape.anchors_from_covariances(&start.herm, &zeros);

    for round in 1..=PHASE1_MAX_ROUNDS {
        let built = formulation::build(ch, cfg, &anchors, BuildOptions { phase1: true, ..base })?;
        out.solves += 1;
        out.record.rounds = round;
        let s = match timed_solve(&built, settings) {
            Ok(s) => s,
            Err(_) => {
                out.record.residual_slack = f64::INFINITY;
                out.anchors = anchors;
                return Ok(out);
            }
        };
        out.solver_s += s.time;
        let slack = built.slack_total(&s.assignment);
        anchors = built.updated_anchors(&s.assignment, &anchors);
        out.record.residual_slack = slack;
        out.covariances = Some(s.assignment.herm.clone());
        if slack <= PHASE1_SLACK_TOL {
            out.record.found = true;
            break;
        }
    }
    out.anchors = anchors;
    Ok(out)
}

/// Phase-1 anchors for the NOMA design.
pub fn init_anchors(ch: &ChannelSet, cfg: &ScenarioConfig) -> (SCAAnchors, Phase1Record) {
    match init_anchors_for(ch, cfg, Scheme::Noma, false, &SolveSettings::default()) {
        Ok(o) => (o.anchors.into_iter().next().unwrap_or_default(), o.record),
        Err(_) => (SCAAnchors::zeros(cfg, cfg.n_su), Phase1Record { found: false, rounds: 0, residual_slack: f64::INFINITY }),
    }
}

/// The relaxed subproblem for NOMA with cooperative jamming.
pub fn build_p2(ch: &ChannelSet, cfg: &ScenarioConfig, anchors: &SCAAnchors, phase1: bool) -> Result<Built, PhysicsError> {
    let opts = BuildOptions { phase1, ..BuildOptions::new(Scheme::Noma) };
    formulation::build(ch, cfg, std::slice::from_ref(anchors), opts)
}

pub fn run_algorithm1(ch: &ChannelSet, cfg: &ScenarioConfig) -> SolveReport {
    run_pipeline(ch, cfg, &RunOptions::new(Scheme::Noma, Algorithm::Sdr))
}

fn information_covariances(built: &Built, a: &Assignment) -> (Vec<CMat>, Vec<CMat>) {
    let w_p = built.vars.w_p.iter().map(|x| a.herm(*x).clone()).collect();
    let w_s = built.vars.w_s.iter().map(|x| a.herm(*x).clone()).collect();
    (w_p, w_s)
}

/// Runs any pipeline: scheme × algorithm × perfect or robust CSI.
pub fn run_pipeline(ch: &ChannelSet, cfg: &ScenarioConfig, opts: &RunOptions) -> SolveReport {
    let clock = Instant::now();
    let mut report = SolveReport::empty(opts);
    let violations = cfg.validate();
    if !violations.is_empty() || !ch.matches(cfg) {
        report.status = RunStatus::InvalidInput;
        report.message = Some(if violations.is_empty() {
            "channel set does not match the configuration".into()
        } else {
            violations.iter().map(|v| v.message.clone()).collect::<Vec<_>>().join("; ")
        });
        return report;
    }
    if let Err(e) = drive(ch, cfg, opts, &mut report) {
        report.status = RunStatus::SolverFailure;
        report.message = Some(e.to_string());
    }
    report.timings.total_s = clock.elapsed().as_secs_f64();
    report
}

fn drive(ch: &ChannelSet, cfg: &ScenarioConfig, opts: &RunOptions, report: &mut SolveReport) -> Result<(), PhysicsError> {
    let tol = cfg.tolerance;
    let init = init_anchors_for(ch, cfg, opts.scheme, opts.robust, &opts.settings)?;
    report.phase1 = init.record.clone();
    report.timings.solver_s += init.solver_s;
    report.timings.solves += init.solves;
    if !init.record.found {
        report.status = RunStatus::Infeasible;
        report.message = Some(format!("phase 1 stopped with residual slack {:.3e}", init.record.residual_slack));
        return Ok(());
    }
    let mut anchors = init.anchors;
    report.anchor_history.push(anchors.clone());
    let penalized = opts.algorithm == Algorithm::Penalty;
    let mut pstate = if penalized {
        let herm = init.covariances.clone().unwrap_or_default();
        let probe = formulation::build(ch, cfg, &anchors, BuildOptions { robust: opts.robust, ..BuildOptions::new(opts.scheme) })?;
        let pick = |xs: &[crate::conic::HermVar]| xs.iter().map(|x| herm.get(x.0).cloned().unwrap_or_else(|| linalg::zeros(1))).collect::<Vec<_>>();
        Some(PenaltyState::from_covariances(cfg.penalty_initial, &pick(&probe.vars.w_p), &pick(&probe.vars.w_s)))
    } else {
        None
    };

    let mut last: Option<(Built, Assignment)> = None;
    let mut prev_power: Option<f64> = None;
    report.status = RunStatus::MaxIterations;
    for n in 1..=cfg.max_iterations {
        let bopts = BuildOptions { scheme: opts.scheme, robust: opts.robust, phase1: false, penalty: pstate.as_ref() };
        let built = formulation::build(ch, cfg, &anchors, bopts)?;
        report.timings.solves += 1;
        let solved = match timed_solve(&built, &opts.settings) {
            Ok(s) => s,
            Err(status) => {
                report.iterations.push(IterationRecord {
                    n,
                    objective_w: f64::NAN,
                    max_rank_gap: f64::NAN,
                    solver_status: status,
                    ell: pstate.as_ref().map(|p| p.ell),
                    rank_gaps: None,
                });
                report.status = RunStatus::SolverFailure;
                report.message = Some(format!("subproblem {n} returned {status}"));
                break;
            }
        };
        report.timings.solver_s += solved.time;
        let a = solved.assignment;
        let power = built.power_w(&a);
        let (w_p, w_s) = information_covariances(&built, &a);
        let gaps: Vec<f64> = w_p
            .iter()
            .chain(&w_s)
            .map(|w| rank_one_gap(&linalg::hermitian_part(w)).unwrap_or(f64::INFINITY) / MW_PER_W)
            .collect();
        let max_gap = gaps.iter().copied().fold(0.0, f64::max);
        report.iterations.push(IterationRecord {
            n,
            objective_w: power,
            max_rank_gap: max_gap,
            solver_status: solved.status,
            ell: pstate.as_ref().map(|p| p.ell),
            rank_gaps: pstate.as_ref().map(|_| gaps.clone()),
        });
        anchors = built.updated_anchors(&a, &anchors);
        report.anchor_history.push(anchors.clone());
        let stable = prev_power.is_some_and(|p| ((power - p) * MW_PER_W).abs() <= tol);
        let done = if let Some(ps) = pstate.as_mut() {
            let ranks_ok = gaps.iter().all(|g| g * MW_PER_W <= tol);
            // ℓ grows only while some gap is open; once every W is rank one a
            // larger ℓ only degrades the conditioning of the subproblem.
            let ell = if ranks_ok {
                ps.ell
            } else {
                let (ell, capped) = PenaltyState::doubled(ps.ell);
                report.ell_cap_hit |= capped;
                ell
            };
            *ps = PenaltyState::from_covariances(ell, &w_p, &w_s);
            ranks_ok && stable
        } else {
            stable
        };
        prev_power = Some(power);
        last = Some((built, a));
        if done {
            report.status = RunStatus::Converged;
            break;
        }
    }

    let Some((built, a)) = last else {
        return Ok(());
    };
    if report.status == RunStatus::SolverFailure {
        return Ok(());
    }
    finish(ch, cfg, opts, report, &built, &a)
}

fn finish(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    report: &mut SolveReport,
    built: &Built,
    a: &Assignment,
) -> Result<(), PhysicsError> {
    let mut sol = project_solution(built.solution(a, cfg));
    if opts.algorithm == Algorithm::Penalty {
        sol = sol.with_leading_factors();
    }
    report.power_w = Some(built.power_w(a));
    report.max_rank_gap = Some(sol.max_rank_gap());
    if opts.scheme == Scheme::Tdma {
        let tdma = TdmaSolution {
            w_p: sol.w_p.clone(),
            sigma_p: sol.sigma_p.clone(),
            w_s: sol.w_s.clone(),
            sigma_s: built.slot_jamming(a).iter().map(psd_project).collect(),
        };
        report.verification = Some(verify_tdma(&tdma, ch, cfg)?);
        report.tdma_solution = Some(tdma);
    } else {
        report.verification = Some(verify_solution(&sol, ch, cfg)?);
    }
    if opts.robust {
        let slack = RobustSlack::from_solution(built, a);
        let worst = if opts.worst_case_samples > 0 {
            Some(worst_case_check(&sol, ch, cfg, opts.worst_case_samples, child_seed(opts.seed, &[1]))?)
        } else {
            None
        };
        report.robust_info = Some(RobustInfo {
            radius_q: cfg.radius_q.clone(),
            radius_f: cfg.radius_f.clone(),
            worst_case_min_slack: worst.as_ref().map(channel_dependent_min_slack),
            worst_case_by_family: worst.map(|w| w.min_slack_by_family()).unwrap_or_default(),
            min_multiplier: slack.min_multiplier(),
            slack,
        });
    }
    if let (Some(n), Algorithm::Sdr, Scheme::Noma | Scheme::NomaNocoop) =
        (opts.randomization_samples, opts.algorithm, opts.scheme)
    {
        let r = gaussian_randomization_seeded(&sol, ch, cfg, n, child_seed(opts.seed, &[2]));
        report.randomized = Some(match r {
            Ok(s) => RandomizedOutcome { feasible: true, power_w: Some(s.total_power()), solution: Some(s) },
            Err(_) => RandomizedOutcome { feasible: false, power_w: None, solution: None },
        });
    }
    report.solution = Some(sol);
    Ok(())
}

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum RandomizationError {
    #[error("no feasible candidate among {0} samples")]
    NoFeasibleCandidate(usize),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

fn feasible(sol: &BeamformingSolution, ch: &ChannelSet, cfg: &ScenarioConfig) -> bool {
    verify_solution(sol, ch, cfg).map(|r| r.all_satisfied()).unwrap_or(false)
}

/// Smallest power scale (within relative `1e-6`) at which `cand` passes
/// verification, assuming feasibility is monotone in the scale.
fn minimal_scale(cand: &BeamformingSolution, ch: &ChannelSet, cfg: &ScenarioConfig) -> Option<f64> {
    let mut hi = 1.0;
    let mut steps = 0;
    while !feasible(&cand.scaled(hi), ch, cfg) {
        hi *= 2.0;
        steps += 1;
        if steps > 40 {
            return None;
        }
    }
    let mut lo = if steps == 0 { 0.0 } else { hi / 2.0 };
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(&cand.scaled(mid), ch, cfg) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// A CN(0, W) sample.
fn gaussian_sample(w: &CMat, rng: &mut ChaCha8Rng) -> CVec {
    use rand_distr::{Distribution, StandardNormal};
    let n = w.nrows();
    let xi = CVec::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    linalg::psd_sqrt(w) * xi
}

fn leading_factor(w: &CMat) -> CVec {
    let (lam, y) = linalg::leading_eigenpair(w);
    y * C64::new(lam.max(0.0).sqrt(), 0.0)
}

/// Matrices failing the pipeline's rank-one test are sampled; the others
/// contribute their principal component.
fn needs_randomization(w: &CMat, tolerance: f64) -> bool {
    !is_rank_one(w, tolerance)
}

/// Gaussian randomization with a fixed seed.
pub fn gaussian_randomization(
    sol: &BeamformingSolution,
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    n_samples: usize,
) -> Result<BeamformingSolution, RandomizationError> {
    gaussian_randomization_seeded(sol, ch, cfg, n_samples, 0)
}

/// Rank-one candidates drawn from the relaxed covariances, each scaled to the
/// least feasible power; returns the cheapest. The principal-eigenvector
/// candidate is always tried first.
pub fn gaussian_randomization_seeded(
    sol: &BeamformingSolution,
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    n_samples: usize,
    seed: u64,
) -> Result<BeamformingSolution, RandomizationError> {
    let tol = cfg.tolerance;
    if !sol.information_matrices().any(|w| needs_randomization(w, tol)) {
        return Ok(sol.clone());
    }
    let candidate = |wp: Vec<CVec>, ws: Vec<CVec>| BeamformingSolution {
        w_p: wp.iter().map(linalg::outer).collect(),
        sigma_p: sol.sigma_p.clone(),
        w_s: ws.iter().map(linalg::outer).collect(),
        sigma_s: sol.sigma_s.clone(),
        w_p_factors: Some(wp),
        w_s_factors: Some(ws),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<BeamformingSolution> = None;
    for k in 0..=n_samples {
        let mut draw = |w: &CMat| {
            if k > 0 && needs_randomization(w, tol) {
                gaussian_sample(w, &mut rng)
            } else {
                leading_factor(w)
            }
        };
        let wp: Vec<CVec> = sol.w_p.iter().map(&mut draw).collect();
        let ws: Vec<CVec> = sol.w_s.iter().map(&mut draw).collect();
        let cand = candidate(wp, ws);
        if let Some(t) = minimal_scale(&cand, ch, cfg) {
            let scaled = cand.scaled(t);
            if best.as_ref().is_none_or(|b| scaled.total_power() < b.total_power()) {
                best = Some(scaled);
            }
        }
    }
    best.ok_or(RandomizationError::NoFeasibleCandidate(n_samples + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_under_estimates_the_exponential() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-30.0..5.0);
            let x: f64 = rng.random_range(-30.0..5.0);
            assert!(a.exp() * (x - a + 1.0) <= x.exp() * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn rank_one_input_is_returned_unchanged() {
        let cfg = ScenarioConfig::table_defaults();
        let ch = crate::scenario::draw_channels(&cfg, 1);
        let mut sol = BeamformingSolution::zeros(&cfg);
        let v = CVec::from_element(cfg.n_pt, C64::new(1e-3, 0.0));
        sol.w_p[0] = linalg::outer(&v);
        let out = gaussian_randomization(&sol, &ch, &cfg, 10).unwrap();
        assert_eq!(out, sol);
    }

    #[test]
    fn near_rank_one_keeps_the_direction() {
        let cfg = ScenarioConfig::table_defaults();
        let ch = crate::scenario::draw_channels(&cfg, 2);
        let mut sol = BeamformingSolution::zeros(&cfg);
        let v = CVec::from_fn(cfg.n_pt, |i, _| C64::new(1.0 + i as f64, -(i as f64) * 0.5)).normalize();
        sol.w_p[0] = linalg::outer(&v) + linalg::real_scale(&linalg::identity(cfg.n_pt), 1e-12);
        let out = gaussian_randomization(&sol, &ch, &cfg, 10).unwrap();
        let (_, y) = linalg::leading_eigenpair(&out.w_p[0]);
        let overlap = (y.adjoint() * &v)[(0, 0)].norm();
        assert!((1.0 - overlap).abs() <= 1e-4, "overlap {overlap}");
    }

    #[test]
    fn psd_projection_clips_negative_eigenvalues() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(-1e-12, 0.0)]));
        let p = psd_project(&m);
        assert!(linalg::lambda_min(&p) >= 0.0);
        assert!((p[(0, 0)].re - 1.0).abs() < 1e-15);
    }
}
