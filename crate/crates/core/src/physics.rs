//! Exact evaluation of the system model: the sigmoid energy-harvesting map
//! and its inverse, the SINR aggregates, secrecy rates and a constraint-level
//! verifier. Nothing here touches the optimizer, so it serves as the
//! independent check for every solver output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMat, CVec, C64};
use crate::scenario::{ChannelSet, ScenarioConfig};

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible target: {0}")]
    Infeasible(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
}

/// Parameters of the sigmoid energy-harvesting model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhParams {
    /// Saturation power in watts.
    pub p_max: f64,
    /// Steepness, 1/W.
    pub a: f64,
    /// Turn-on offset, W.
    pub b: f64,
}

impl Default for EhParams {
    fn default() -> Self {
        Self { p_max: 0.024, a: 1500.0, b: 0.0022 }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl EhParams {
    /// `Ψ = 1 / (1 + exp(a b))`.
    pub fn psi_zero(&self) -> f64 {
        logistic(-self.a * self.b)
    }
}

/// Harvested DC power for an RF input power (both in watts).
pub fn harvested_power(rf_power: f64, eh: &EhParams) -> Result<f64, PhysicsError> {
    if !(rf_power >= 0.0) {
        return Err(PhysicsError::Domain(format!("rf_power = {rf_power} must be >= 0")));
    }
    let big_psi = eh.psi_zero();
    // ψ(0) and p_max·Ψ share the same expression so that Φ(0) is exactly 0.
    let psi = eh.p_max * logistic(eh.a * (rf_power - eh.b));
    Ok((psi - eh.p_max * big_psi) / (1.0 - big_psi))
}

/// Minimum RF power that harvests `zeta` watts.
pub fn eh_threshold(zeta: f64, eh: &EhParams) -> Result<f64, PhysicsError> {
    if !(zeta >= 0.0) {
        return Err(PhysicsError::Domain(format!("zeta = {zeta} must be >= 0")));
    }
    if zeta >= eh.p_max {
        return Err(PhysicsError::Infeasible(format!(
            "zeta = {zeta} W cannot be harvested below saturation p_max = {} W",
            eh.p_max
        )));
    }
    if zeta == 0.0 {
        return Ok(0.0);
    }
    let big_psi = eh.psi_zero();
    let arg = eh.p_max / (zeta * (1.0 - big_psi) + eh.p_max * big_psi) - 1.0;
    Ok(eh.b - arg.ln() / eh.a)
}

/// Transmit covariances of both base stations, plus optional rank-one
/// factors. Matrices are in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SolutionRepr", into = "SolutionRepr")]
pub struct BeamformingSolution {
    pub w_p: Vec<CMat>,
    pub sigma_p: Vec<CMat>,
    pub w_s: Vec<CMat>,
    pub sigma_s: CMat,
    pub w_p_factors: Option<Vec<CVec>>,
    pub w_s_factors: Option<Vec<CVec>>,
}

type MatRepr = Vec<Vec<[f64; 2]>>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionRepr {
    w_p: Vec<MatRepr>,
    sigma_p: Vec<MatRepr>,
    w_s: Vec<MatRepr>,
    sigma_s: MatRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_p_factors: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_s_factors: Option<Vec<Vec<[f64; 2]>>>,
}

fn mat_to_repr(m: &CMat) -> MatRepr {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn mat_from_repr(r: &MatRepr) -> Result<CMat, String> {
    let n = r.len();
    if r.iter().any(|row| row.len() != n) {
        return Err("matrices must be square".into());
    }
    if r.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err("non-finite matrix entry".into());
    }
    Ok(CMat::from_fn(n, n, |i, j| C64::new(r[i][j][0], r[i][j][1])))
}

/// Serde adapter for lists of complex matrices as rows of `[re, im]` pairs.
pub(crate) mod mat_list {
    use super::{mat_from_repr, mat_to_repr, MatRepr};
    use crate::linalg::CMat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(mat_to_repr).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let r = Vec::<MatRepr>::deserialize(d)?;
        r.iter().map(mat_from_repr).collect::<Result<_, _>>().map_err(serde::de::Error::custom)
    }
}

impl From<BeamformingSolution> for SolutionRepr {
    fn from(s: BeamformingSolution) -> Self {
        use crate::scenario::vec_to_repr;
        Self {
            w_p: s.w_p.iter().map(mat_to_repr).collect(),
            sigma_p: s.sigma_p.iter().map(mat_to_repr).collect(),
            w_s: s.w_s.iter().map(mat_to_repr).collect(),
            sigma_s: mat_to_repr(&s.sigma_s),
            w_p_factors: s.w_p_factors.as_ref().map(|v| v.iter().map(vec_to_repr).collect()),
            w_s_factors: s.w_s_factors.as_ref().map(|v| v.iter().map(vec_to_repr).collect()),
        }
    }
}

impl TryFrom<SolutionRepr> for BeamformingSolution {
    type Error = String;
    fn try_from(r: SolutionRepr) -> Result<Self, String> {
        use crate::scenario::vec_from_repr;
        let mats = |v: &Vec<MatRepr>| v.iter().map(mat_from_repr).collect::<Result<Vec<_>, _>>();
        let vecs = |v: &Option<Vec<Vec<[f64; 2]>>>| {
            v.as_ref().map(|v| v.iter().map(vec_from_repr).collect::<Result<Vec<_>, _>>()).transpose()
        };
        Ok(Self {
            w_p: mats(&r.w_p)?,
            sigma_p: mats(&r.sigma_p)?,
            w_s: mats(&r.w_s)?,
            sigma_s: mat_from_repr(&r.sigma_s)?,
            w_p_factors: vecs(&r.w_p_factors)?,
            w_s_factors: vecs(&r.w_s_factors)?,
        })
    }
}

impl BeamformingSolution {
    pub fn zeros(cfg: &ScenarioConfig) -> Self {
        Self {
            w_p: vec![linalg::zeros(cfg.n_pt); cfg.m_clusters],
            sigma_p: vec![linalg::zeros(cfg.n_pt); cfg.m_clusters],
            w_s: vec![linalg::zeros(cfg.n_st); cfg.n_su],
            sigma_s: linalg::zeros(cfg.n_st),
            w_p_factors: None,
            w_s_factors: None,
        }
    }

    /// Objective of the power-minimization problem: sum of all traces.
    pub fn total_power(&self) -> f64 {
        self.w_p.iter().chain(&self.sigma_p).chain(&self.w_s).map(linalg::trace_re).sum::<f64>()
            + linalg::trace_re(&self.sigma_s)
    }

    /// `Σ_m (W_{p,m} + Σ_{p,m})`.
    pub fn pbs_covariance(&self) -> CMat {
        let n = self.sigma_s.nrows();
        let n_pt = self.w_p.first().map_or(n, |w| w.nrows());
        let mut acc = linalg::zeros(n_pt);
        for (w, s) in self.w_p.iter().zip(&self.sigma_p) {
            acc += w;
            acc += s;
        }
        acc
    }

    /// `Σ_{u≥from} W_{s,u} + Σ_s`.
    pub fn cbs_covariance_from(&self, from: usize) -> CMat {
        let mut acc = self.sigma_s.clone();
        for w in self.w_s.iter().skip(from) {
            acc += w;
        }
        acc
    }

    pub fn scaled(&self, t: f64) -> Self {
        let sc = |m: &CMat| linalg::real_scale(m, t);
        let r = t.sqrt();
        let sv = |v: &CVec| v * C64::new(r, 0.0);
        Self {
            w_p: self.w_p.iter().map(sc).collect(),
            sigma_p: self.sigma_p.iter().map(sc).collect(),
            w_s: self.w_s.iter().map(sc).collect(),
            sigma_s: sc(&self.sigma_s),
            w_p_factors: self.w_p_factors.as_ref().map(|v| v.iter().map(sv).collect()),
            w_s_factors: self.w_s_factors.as_ref().map(|v| v.iter().map(sv).collect()),
        }
    }

    /// Information covariances `W_{p,m}` then `W_{s,j}`.
    pub fn information_matrices(&self) -> impl Iterator<Item = &CMat> {
        self.w_p.iter().chain(&self.w_s)
    }

    /// All matrices, information and artificial noise.
    pub fn all_matrices(&self) -> impl Iterator<Item = &CMat> {
        self.w_p.iter().chain(&self.sigma_p).chain(&self.w_s).chain(std::iter::once(&self.sigma_s))
    }

    /// Largest rank-one gap over the information covariances.
    pub fn max_rank_gap(&self) -> f64 {
        self.information_matrices().map(|w| rank_one_gap(w).unwrap_or(f64::INFINITY)).fold(0.0, f64::max)
    }

    /// Sets `w = √λ_max · y` for every information covariance.
    pub fn with_leading_factors(mut self) -> Self {
        let f = |w: &CMat| {
            let (lam, y) = linalg::leading_eigenpair(w);
            y * C64::new(lam.max(0.0).sqrt(), 0.0)
        };
        self.w_p_factors = Some(self.w_p.iter().map(f).collect());
        self.w_s_factors = Some(self.w_s.iter().map(f).collect());
        self
    }

    pub fn matches(&self, cfg: &ScenarioConfig) -> bool {
        let sq = |m: &CMat, n: usize| m.nrows() == n && m.ncols() == n;
        self.w_p.len() == cfg.m_clusters
            && self.sigma_p.len() == cfg.m_clusters
            && self.w_s.len() == cfg.n_su
            && self.w_p.iter().chain(&self.sigma_p).all(|m| sq(m, cfg.n_pt))
            && self.w_s.iter().all(|m| sq(m, cfg.n_st))
            && sq(&self.sigma_s, cfg.n_st)
    }
}

/// The received-power aggregates of every receiver (watts).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateTable {
    /// `Γ_{p,m,i}`, total received power plus noise at PU `(m, i)`.
    pub gamma_p: Vec<Vec<f64>>,
    /// `Γ_{e,m,k}`, received RF power (no noise) at primary EHR `(m, k)`.
    pub gamma_e: Vec<Vec<f64>>,
    /// `Γ_{s,j}`, PBS power plus the CBS power of `W_{s,j} + Σ_s` plus noise at SU `j`.
    pub gamma_s: Vec<f64>,
    /// `Λ_{e,l,j}`, indexed `[l][j]`: PBS power plus `W_{s,j} + Σ_s` at secondary EHR `l`, plus noise.
    pub lambda_e: Vec<Vec<f64>>,
    /// `Λ_{s,j,z}`, indexed `[j][z]`: PBS power plus `Σ_{u≥j} W_{s,u} + Σ_s` at SU `z`, plus noise.
    pub lambda_s: Vec<Vec<f64>>,
    /// `Λ_{s,l,j}`, indexed `[l][j]`: PBS power plus `Σ_{u≥j} W_{s,u} + Σ_s` at secondary EHR `l`, plus noise.
    pub lambda_sl: Vec<Vec<f64>>,
}

fn check_dims(sol: &BeamformingSolution, ch: &ChannelSet, cfg: &ScenarioConfig) -> Result<(), PhysicsError> {
    if !sol.matches(cfg) {
        return Err(PhysicsError::Dimension("solution does not match the configuration".into()));
    }
    if !ch.matches(cfg) {
        return Err(PhysicsError::Dimension("channel set does not match the configuration".into()));
    }
    Ok(())
}

/// Every aggregate of the received-signal model.
pub fn sinr_aggregates(
    sol: &BeamformingSolution,
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
) -> Result<AggregateTable, PhysicsError> {
    check_dims(sol, ch, cfg)?;
    let noise = cfg.noise_power;
    let pbs = sol.pbs_covariance();
    let cbs_all = sol.cbs_covariance_from(0);
    let q = linalg::quad_form;

    let gamma_p = (0..cfg.m_clusters)
        .map(|m| {
            (0..cfg.n_pu_per_cluster)
                .map(|i| q(&pbs, &ch.h_p[m][i]) + q(&cbs_all, &ch.f_s[m][i]) + noise)
                .collect()
        })
        .collect();
    let gamma_e = (0..cfg.m_clusters)
        .map(|m| {
            (0..cfg.k_ehr_per_cluster)
                .map(|k| q(&pbs, &ch.g_e1[m][k]) + q(&cbs_all, &ch.f_e[m][k]))
                .collect()
        })
        .collect();
    let own: Vec<CMat> = sol.w_s.iter().map(|w| w + &sol.sigma_s).collect();
    let gamma_s = (0..cfg.n_su).map(|j| q(&pbs, &ch.q_p[j]) + q(&own[j], &ch.h_s[j]) + noise).collect();
    let lambda_e = (0..cfg.k_ehr_secondary)
        .map(|l| (0..cfg.n_su).map(|j| q(&pbs, &ch.q_e[l]) + q(&own[j], &ch.g_e2[l]) + noise).collect())
        .collect();
    let tails: Vec<CMat> = (0..cfg.n_su).map(|j| sol.cbs_covariance_from(j)).collect();
    let lambda_s = (0..cfg.n_su)
        .map(|j| (0..cfg.n_su).map(|z| q(&pbs, &ch.q_p[z]) + q(&tails[j], &ch.h_s[z]) + noise).collect())
        .collect();
    let lambda_sl = (0..cfg.k_ehr_secondary)
        .map(|l| (0..cfg.n_su).map(|j| q(&pbs, &ch.q_e[l]) + q(&tails[j], &ch.g_e2[l]) + noise).collect())
        .collect();
    Ok(AggregateTable { gamma_p, gamma_e, gamma_s, lambda_e, lambda_s, lambda_sl })
}

/// `log2(total / (total − signal))`, treating `0/0` as a zero-rate link.
pub fn log_ratio(total: f64, signal: f64) -> f64 {
    let rest = total - signal;
    if signal <= 0.0 || total <= 0.0 {
        return 0.0;
    }
    if rest <= 0.0 {
        return f64::INFINITY;
    }
    (total / rest).log2()
}

fn clamp_rate(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.max(0.0)
    }
}

/// Secrecy rate of PU `(m, i)` against the EHRs of its cluster, from precomputed aggregates.
pub fn pu_rate_from(table: &AggregateTable, sol: &BeamformingSolution, ch: &ChannelSet, cfg: &ScenarioConfig, m: usize, i: usize) -> f64 {
    let noise = cfg.noise_power;
    let w = &sol.w_p[m];
    let legit = log_ratio(table.gamma_p[m][i], linalg::quad_form(w, &ch.h_p[m][i]));
    let eve = (0..cfg.k_ehr_per_cluster)
        .map(|k| log_ratio(table.gamma_e[m][k] + noise, linalg::quad_form(w, &ch.g_e1[m][k])))
        .fold(0.0, f64::max);
    clamp_rate(legit - eve)
}

/// Worst-case secrecy rate of SU `j`, from precomputed aggregates.
pub fn su_rate_from(table: &AggregateTable, sol: &BeamformingSolution, ch: &ChannelSet, cfg: &ScenarioConfig, j: usize) -> f64 {
    let w = &sol.w_s[j];
    let last = cfg.n_su - 1;
    let (legit, eve) = if j == last {
        let legit = log_ratio(table.gamma_s[j], linalg::quad_form(w, &ch.h_s[j]));
        let eve = (0..cfg.k_ehr_secondary)
            .map(|l| log_ratio(table.lambda_e[l][j], linalg::quad_form(w, &ch.g_e2[l])))
            .fold(0.0, f64::max);
        (legit, eve)
    } else {
        let legit = cfg
            .sic_indices(j)
            .into_iter()
            .map(|z| log_ratio(table.lambda_s[j][z], linalg::quad_form(w, &ch.h_s[z])))
            .fold(f64::INFINITY, f64::min);
        let eve = (0..cfg.k_ehr_secondary)
            .map(|l| log_ratio(table.lambda_sl[l][j], linalg::quad_form(w, &ch.g_e2[l])))
            .fold(0.0, f64::max);
        (legit, eve)
    };
    clamp_rate(legit - eve)
}

pub fn secrecy_rate_pu(
    sol: &BeamformingSolution,
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    m: usize,
    i: usize,
) -> Result<f64, PhysicsError> {
    let table = sinr_aggregates(sol, ch, cfg)?;
    Ok(pu_rate_from(&table, sol, ch, cfg, m, i))
}

pub fn secrecy_rate_su(sol: &BeamformingSolution, ch: &ChannelSet, cfg: &ScenarioConfig, j: usize) -> Result<f64, PhysicsError> {
    let table = sinr_aggregates(sol, ch, cfg)?;
    Ok(su_rate_from(&table, sol, ch, cfg, j))
}

/// RF input of primary EHR `(m, k)` and secondary EHR `l`; noise is excluded.
pub fn ehr_rf_powers(table: &AggregateTable, cfg: &ScenarioConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let primary = table.gamma_e.clone();
    let secondary = table.lambda_sl.iter().map(|row| (row[0] - cfg.noise_power).max(0.0)).collect();
    (primary, secondary)
}

/// `Tr(W) − λ_max(W)`, zero exactly for matrices of rank at most one.
pub fn rank_one_gap(w: &CMat) -> Result<f64, PhysicsError> {
    let scale = 1.0 + w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let defect = linalg::hermitian_defect(w);
    if defect > 1e-9 * scale {
        return Err(PhysicsError::NotHermitian(defect));
    }
    if w.nrows() == 0 {
        return Ok(0.0);
    }
    Ok((linalg::trace_re(w) - linalg::lambda_max(w)).max(0.0))
}

/// Slack thresholds used to mark a constraint as satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyTolerances {
    /// bits/s/Hz
    pub rate: f64,
    /// watts
    pub power: f64,
    /// relative to the trace
    pub psd: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self { rate: 1e-4, power: 1e-6, psd: 1e-8 }
    }
}

/// One evaluated constraint: `slack = lhs − rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub satisfied: bool,
}

impl ConstraintRecord {
    fn new(name: String, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = lhs - rhs;
        Self { name, lhs, rhs, slack, satisfied: slack >= -tol }
    }

    /// Constraint family: the part of the name before `[`.
    pub fn family(&self) -> &str {
        self.name.split('[').next().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub records: Vec<ConstraintRecord>,
    pub total_power: f64,
    pub max_rank_gap: f64,
}

impl VerificationReport {
    pub fn all_satisfied(&self) -> bool {
        self.records.iter().all(|r| r.satisfied)
    }

    pub fn min_slack(&self, family: &str) -> Option<f64> {
        self.records.iter().filter(|r| r.family() == family).map(|r| r.slack).reduce(f64::min)
    }

    /// Families in first-appearance order with their minimum slack.
    pub fn min_slack_by_family(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for r in &self.records {
            match out.iter_mut().find(|(f, _)| f == r.family()) {
                Some((_, s)) => *s = s.min(r.slack),
                None => out.push((r.family().to_string(), r.slack)),
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records serialize")
    }
}

/// Evaluates C1–C4 (secrecy and harvesting) and the PSD conditions of `sol`.
pub fn verify_solution(sol: &BeamformingSolution, ch: &ChannelSet, cfg: &ScenarioConfig) -> Result<VerificationReport, PhysicsError> {
    verify_solution_with(sol, ch, cfg, &VerifyTolerances::default())
}

pub fn verify_solution_with(
    sol: &BeamformingSolution,
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    tol: &VerifyTolerances,
) -> Result<VerificationReport, PhysicsError> {
    let table = sinr_aggregates(sol, ch, cfg)?;
    let mut records = Vec::new();
    for m in 0..cfg.m_clusters {
        for i in 0..cfg.n_pu_per_cluster {
            let r = pu_rate_from(&table, sol, ch, cfg, m, i);
            records.push(ConstraintRecord::new(format!("C1[m={m},i={i}]"), r, cfg.gamma_pu[m][i], tol.rate));
        }
    }
    for j in 0..cfg.n_su {
        let r = su_rate_from(&table, sol, ch, cfg, j);
        records.push(ConstraintRecord::new(format!("C2[j={j}]"), r, cfg.gamma_su[j], tol.rate));
    }
    let (rf_primary, rf_secondary) = ehr_rf_powers(&table, cfg);
    for (m, row) in rf_primary.iter().enumerate() {
        for (k, &rf) in row.iter().enumerate() {
            let phi = harvested_power(rf, &cfg.eh_params)?;
            records.push(ConstraintRecord::new(format!("C3[m={m},k={k}]"), phi, cfg.zeta_primary, tol.power));
        }
    }
    for (l, &rf) in rf_secondary.iter().enumerate() {
        let phi = harvested_power(rf, &cfg.eh_params)?;
        records.push(ConstraintRecord::new(format!("C4[l={l}]"), phi, cfg.zeta_secondary, tol.power));
    }
    records.extend(psd_records(sol, tol));
    Ok(VerificationReport { records, total_power: sol.total_power(), max_rank_gap: sol.max_rank_gap() })
}

pub fn psd_records(sol: &BeamformingSolution, tol: &VerifyTolerances) -> Vec<ConstraintRecord> {
    let mut records = Vec::new();
    let mut push = |name: String, m: &CMat| {
        let lhs = if m.nrows() == 0 { 0.0 } else { linalg::lambda_min(m) };
        let rhs = -tol.psd * linalg::trace_re(m).abs();
        let slack = lhs - rhs;
        records.push(ConstraintRecord { name, lhs, rhs, slack, satisfied: slack >= 0.0 });
    };
    for (m, w) in sol.w_p.iter().enumerate() {
        push(format!("C6[W_p,m={m}]"), w);
    }
    for (m, s) in sol.sigma_p.iter().enumerate() {
        push(format!("C6[Sigma_p,m={m}]"), s);
    }
    for (j, w) in sol.w_s.iter().enumerate() {
        push(format!("C6[W_s,j={j}]"), w);
    }
    push("C6[Sigma_s]".into(), &sol.sigma_s);
    records
}
