//! Network scenarios: dimensions, targets, channel draws and CSI perturbations.
//!
//! Every random object in the crate is derived from a 64-bit seed through
//! [`child_seed`], so a trial's channels depend only on `(seed, trial)` and
//! never on the order in which workers pick trials up.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{CVec, C64};
use crate::physics::EhParams;

/// Per-link-class variance of the circularly-symmetric Gaussian channel
/// entries (variance of each complex entry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelVariances {
    pub h_p: f64,
    pub f_s: f64,
    pub q_p: f64,
    pub h_s: f64,
    pub g_e: f64,
    pub f_e: f64,
    pub q_e: f64,
    pub g_e2: f64,
}

impl Default for ChannelVariances {
    fn default() -> Self {
        Self {
            h_p: 2.0,
            f_s: 0.5,
            q_p: 0.5,
            h_s: 2.0,
            g_e: 1.5,
            f_e: 0.5,
            q_e: 0.5,
            g_e2: 1.5,
        }
    }
}

/// Network dimensions, receiver noise, EH circuit model, targets and CSI
/// uncertainty radii. All powers are in watts.
///
/// `k_ehr_per_cluster` is not fixed by the reference parameter table; the
/// default of one EHR per primary cluster is a desk-scale choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_pt: usize,
    pub n_st: usize,
    pub m_clusters: usize,
    pub n_pu_per_cluster: usize,
    pub n_su: usize,
    pub k_ehr_per_cluster: usize,
    pub k_ehr_secondary: usize,
    pub noise_power: f64,
    pub channel_variances: ChannelVariances,
    pub eh_params: EhParams,
    /// Secrecy-rate target (bits/s/Hz) of PU `i` in cluster `m`, indexed `[m][i]`.
    pub gamma_pu: Vec<Vec<f64>>,
    /// Secrecy-rate target (bits/s/Hz) of SU `j`.
    pub gamma_su: Vec<f64>,
    pub zeta_primary: f64,
    pub zeta_secondary: f64,
    /// Uncertainty radius of the PBS → secondary-EHR `l` channel.
    pub radius_q: Vec<f64>,
    /// Uncertainty radius of the CBS → primary-EHR `(m, k)` channel.
    pub radius_f: Vec<Vec<f64>>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub penalty_initial: f64,
    /// Restrict the SIC minimum of the weaker-SU secrecy rate to the three
    /// indices `{j, j+1, N_s}` instead of the whole range `j..=N_s`.
    #[serde(default)]
    pub sic_literal_triple: bool,
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::table_defaults()
    }
}

impl ScenarioConfig {
    /// The reference simulation parameters, with two secondary EHRs.
    pub fn table_defaults() -> Self {
        let m = 2;
        let n_pu = 2;
        let k_m = 1;
        let n_su = 3;
        let k_s = 2;
        Self {
            n_pt: 10,
            n_st: 5,
            m_clusters: m,
            n_pu_per_cluster: n_pu,
            n_su,
            k_ehr_per_cluster: k_m,
            k_ehr_secondary: k_s,
            noise_power: dbm_to_watts(-120.0),
            channel_variances: ChannelVariances::default(),
            eh_params: EhParams::default(),
            gamma_pu: vec![vec![2.0; n_pu]; m],
            gamma_su: vec![1.0; n_su],
            zeta_primary: 0.015,
            zeta_secondary: 0.005,
            radius_q: vec![1e-2; k_s],
            radius_f: vec![vec![1e-2; k_m]; m],
            tolerance: 1e-4,
            max_iterations: 100,
            penalty_initial: 1.0,
            sic_literal_triple: false,
        }
    }

    /// A smaller network (4 + 3 antennas, one primary cluster of two PUs,
    /// two SUs, one EHR per area) with the table's targets and radii. Used
    /// for quick checks and for the robust pipeline, whose LMIs scale with
    /// the antenna counts.
    pub fn reduced() -> Self {
        let mut c = Self::table_defaults();
        c.n_pt = 4;
        c.n_st = 3;
        c.m_clusters = 1;
        c.k_ehr_per_cluster = 1;
        c.gamma_pu = vec![vec![2.0; c.n_pu_per_cluster]];
        c.radius_f = vec![vec![1e-2; 1]];
        c.with_n_su(2).with_k_ehr_secondary(1)
    }

    /// Same dimensions with every secrecy and EH target at zero.
    pub fn zero_targets(mut self) -> Self {
        self = self.with_gamma_pu(0.0).with_gamma_su(0.0);
        self.zeta_primary = 0.0;
        self.zeta_secondary = 0.0;
        self
    }

    pub fn with_gamma_pu(mut self, gamma: f64) -> Self {
        self.gamma_pu = vec![vec![gamma; self.n_pu_per_cluster]; self.m_clusters];
        self
    }

    pub fn with_gamma_su(mut self, gamma: f64) -> Self {
        self.gamma_su = vec![gamma; self.n_su];
        self
    }

    pub fn with_zeta_secondary(mut self, zeta: f64) -> Self {
        self.zeta_secondary = zeta;
        self
    }

    /// Sets a common radius on every uncertain link.
    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius_q = vec![radius; self.k_ehr_secondary];
        self.radius_f = vec![vec![radius; self.k_ehr_per_cluster]; self.m_clusters];
        self
    }

    /// Changes the number of secondary EHRs, resizing per-EHR vectors with
    /// their first entry (or `1e-2` when empty).
    pub fn with_k_ehr_secondary(mut self, k: usize) -> Self {
        let r = self.radius_q.first().copied().unwrap_or(1e-2);
        self.k_ehr_secondary = k;
        self.radius_q = vec![r; k];
        self
    }

    /// Changes the number of SUs, resizing `gamma_su` with its first entry.
    pub fn with_n_su(mut self, n: usize) -> Self {
        let g = self.gamma_su.first().copied().unwrap_or(1.0);
        self.n_su = n;
        self.gamma_su = vec![g; n];
        self
    }

    pub fn n_pu_total(&self) -> usize {
        self.m_clusters * self.n_pu_per_cluster
    }

    /// Indices `z` over which the SIC minimum for SU `j < N_s` is taken.
    pub fn sic_indices(&self, j: usize) -> Vec<usize> {
        let last = self.n_su - 1;
        if self.sic_literal_triple {
            let mut v = vec![j, j + 1, last];
            v.retain(|&z| z <= last);
            v.dedup();
            v
        } else {
            (j..=last).collect()
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_config(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub message: String,
}

pub const RULE_COUNT: &str = "count";
pub const RULE_NONNEGATIVE: &str = "nonnegative";
pub const RULE_NOISE: &str = "noise-positive";
pub const RULE_EH_PARAMS: &str = "eh-params";
pub const RULE_EH_SATURATION: &str = "eh-saturation";
pub const RULE_TARGET: &str = "secrecy-target";
pub const RULE_SHAPE: &str = "shape";
pub const RULE_SOLVER: &str = "solver-setting";

/// Returns every violated invariant of `config`; an empty list means valid.
pub fn validate_config(config: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule: &'static str, message: String| out.push(Violation { rule, message });

    let counts = [
        ("n_pt", config.n_pt),
        ("n_st", config.n_st),
        ("m_clusters", config.m_clusters),
        ("n_pu_per_cluster", config.n_pu_per_cluster),
        ("n_su", config.n_su),
        ("k_ehr_per_cluster", config.k_ehr_per_cluster),
        ("k_ehr_secondary", config.k_ehr_secondary),
    ];
    for (name, v) in counts {
        if v == 0 {
            push(RULE_COUNT, format!("{name} must be at least 1"));
        }
    }

    let cv = &config.channel_variances;
    let scalars = [
        ("channel_variances.h_p", cv.h_p),
        ("channel_variances.f_s", cv.f_s),
        ("channel_variances.q_p", cv.q_p),
        ("channel_variances.h_s", cv.h_s),
        ("channel_variances.g_e", cv.g_e),
        ("channel_variances.f_e", cv.f_e),
        ("channel_variances.q_e", cv.q_e),
        ("channel_variances.g_e2", cv.g_e2),
        ("tolerance", config.tolerance),
    ];
    for (name, v) in scalars {
        if !(v.is_finite() && v >= 0.0) {
            push(RULE_NONNEGATIVE, format!("{name} = {v} must be finite and >= 0"));
        }
    }
    if !(config.noise_power.is_finite() && config.noise_power > 0.0) {
        push(
            RULE_NOISE,
            format!("noise_power = {} must be finite and > 0", config.noise_power),
        );
    }

    let eh = &config.eh_params;
    if !(eh.p_max.is_finite() && eh.p_max > 0.0 && eh.a.is_finite() && eh.a > 0.0 && eh.b.is_finite() && eh.b >= 0.0)
    {
        push(
            RULE_EH_PARAMS,
            format!("eh_params need p_max > 0, a > 0, b >= 0 (got {eh:?})"),
        );
    }
    for (name, z) in [("zeta_primary", config.zeta_primary), ("zeta_secondary", config.zeta_secondary)] {
        if !(z.is_finite() && z >= 0.0) {
            push(RULE_NONNEGATIVE, format!("{name} = {z} must be finite and >= 0"));
        } else if z >= eh.p_max {
            push(
                RULE_EH_SATURATION,
                format!("{name} = {z} W is not below the EH saturation power p_max = {} W", eh.p_max),
            );
        }
    }

    if config.max_iterations == 0 {
        push(RULE_SOLVER, "max_iterations must be at least 1".into());
    }
    if !(config.penalty_initial.is_finite() && config.penalty_initial > 0.0) {
        push(RULE_SOLVER, format!("penalty_initial = {} must be > 0", config.penalty_initial));
    }

    // Shape checks only make sense for dimensions that are themselves valid.
    if config.m_clusters > 0 && config.n_pu_per_cluster > 0 {
        if config.gamma_pu.len() != config.m_clusters
            || config.gamma_pu.iter().any(|r| r.len() != config.n_pu_per_cluster)
        {
            push(RULE_SHAPE, "gamma_pu must be m_clusters x n_pu_per_cluster".into());
        }
    }
    if config.n_su > 0 && config.gamma_su.len() != config.n_su {
        push(RULE_SHAPE, "gamma_su must have n_su entries".into());
    }
    if config.k_ehr_secondary > 0 && config.radius_q.len() != config.k_ehr_secondary {
        push(RULE_SHAPE, "radius_q must have k_ehr_secondary entries".into());
    }
    if config.m_clusters > 0 && config.k_ehr_per_cluster > 0 {
        if config.radius_f.len() != config.m_clusters
            || config.radius_f.iter().any(|r| r.len() != config.k_ehr_per_cluster)
        {
            push(RULE_SHAPE, "radius_f must be m_clusters x k_ehr_per_cluster".into());
        }
    }

    let targets = config.gamma_pu.iter().flatten().chain(config.gamma_su.iter());
    if targets.clone().any(|g| !(g.is_finite() && *g >= 0.0)) {
        push(RULE_TARGET, "secrecy targets must be finite and >= 0".into());
    }
    let radii = config.radius_q.iter().chain(config.radius_f.iter().flatten());
    if radii.clone().any(|r| !(r.is_finite() && *r >= 0.0)) {
        push(RULE_NONNEGATIVE, "uncertainty radii must be finite and >= 0".into());
    }
    out
}

/// All channel vectors between both base stations and every receiver.
///
/// Indexing: `h_p[m][i]`, `f_s[m][i]` (PBS / CBS → PU `i` of cluster `m`);
/// `q_p[j]`, `h_s[j]` (PBS / CBS → SU `j`); `g_e1[m][k]`, `f_e[m][k]`
/// (PBS / CBS → primary EHR); `q_e[l]`, `g_e2[l]` (PBS / CBS → secondary EHR).
/// SUs are labelled so that `‖h_s[0]‖ ≤ ‖h_s[1]‖ ≤ …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelSetRepr", into = "ChannelSetRepr")]
pub struct ChannelSet {
    pub h_p: Vec<Vec<CVec>>,
    pub f_s: Vec<Vec<CVec>>,
    pub q_p: Vec<CVec>,
    pub h_s: Vec<CVec>,
    pub g_e1: Vec<Vec<CVec>>,
    pub f_e: Vec<Vec<CVec>>,
    pub q_e: Vec<CVec>,
    pub g_e2: Vec<CVec>,
}

type VecRepr = Vec<[f64; 2]>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSetRepr {
    h_p: Vec<Vec<VecRepr>>,
    f_s: Vec<Vec<VecRepr>>,
    q_p: Vec<VecRepr>,
    h_s: Vec<VecRepr>,
    g_e1: Vec<Vec<VecRepr>>,
    f_e: Vec<Vec<VecRepr>>,
    q_e: Vec<VecRepr>,
    g_e2: Vec<VecRepr>,
}

pub(crate) fn vec_to_repr(v: &CVec) -> VecRepr {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub(crate) fn vec_from_repr(v: &VecRepr) -> Result<CVec, String> {
    if v.iter().flatten().any(|x| !x.is_finite()) {
        return Err("non-finite channel entry".into());
    }
    Ok(CVec::from_iterator(v.len(), v.iter().map(|p| C64::new(p[0], p[1]))))
}

impl From<ChannelSet> for ChannelSetRepr {
    fn from(c: ChannelSet) -> Self {
        let one = |v: &Vec<CVec>| v.iter().map(vec_to_repr).collect::<Vec<_>>();
        let two = |v: &Vec<Vec<CVec>>| v.iter().map(one).collect::<Vec<_>>();
        Self {
            h_p: two(&c.h_p),
            f_s: two(&c.f_s),
            q_p: one(&c.q_p),
            h_s: one(&c.h_s),
            g_e1: two(&c.g_e1),
            f_e: two(&c.f_e),
            q_e: one(&c.q_e),
            g_e2: one(&c.g_e2),
        }
    }
}

impl TryFrom<ChannelSetRepr> for ChannelSet {
    type Error = String;
    fn try_from(r: ChannelSetRepr) -> Result<Self, String> {
        let one = |v: &Vec<VecRepr>| v.iter().map(vec_from_repr).collect::<Result<Vec<_>, _>>();
        let two = |v: &Vec<Vec<VecRepr>>| v.iter().map(one).collect::<Result<Vec<_>, _>>();
        Ok(Self {
            h_p: two(&r.h_p)?,
            f_s: two(&r.f_s)?,
            q_p: one(&r.q_p)?,
            h_s: one(&r.h_s)?,
            g_e1: two(&r.g_e1)?,
            f_e: two(&r.f_e)?,
            q_e: one(&r.q_e)?,
            g_e2: one(&r.g_e2)?,
        })
    }
}

impl ChannelSet {
    /// Whether every vector has the dimension `config` demands.
    pub fn matches(&self, config: &ScenarioConfig) -> bool {
        let grid = |v: &Vec<Vec<CVec>>, rows: usize, cols: usize, len: usize| {
            v.len() == rows && v.iter().all(|r| r.len() == cols && r.iter().all(|x| x.len() == len))
        };
        let line = |v: &Vec<CVec>, n: usize, len: usize| v.len() == n && v.iter().all(|x| x.len() == len);
        let c = config;
        grid(&self.h_p, c.m_clusters, c.n_pu_per_cluster, c.n_pt)
            && grid(&self.f_s, c.m_clusters, c.n_pu_per_cluster, c.n_st)
            && line(&self.q_p, c.n_su, c.n_pt)
            && line(&self.h_s, c.n_su, c.n_st)
            && grid(&self.g_e1, c.m_clusters, c.k_ehr_per_cluster, c.n_pt)
            && grid(&self.f_e, c.m_clusters, c.k_ehr_per_cluster, c.n_st)
            && line(&self.q_e, c.k_ehr_secondary, c.n_pt)
            && line(&self.g_e2, c.k_ehr_secondary, c.n_st)
    }

    pub fn is_finite(&self) -> bool {
        let ok = |v: &CVec| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        self.h_p.iter().chain(&self.f_s).chain(&self.g_e1).chain(&self.f_e).flatten().all(ok)
            && self.q_p.iter().chain(&self.h_s).chain(&self.q_e).chain(&self.g_e2).all(ok)
    }

    pub fn su_norms_sorted(&self) -> bool {
        self.h_s.windows(2).all(|w| w[0].norm() <= w[1].norm())
    }
}

/// Derives an independent child seed from `seed` and an index path.
///
/// Each path element selects a ChaCha stream of the current generator; the
/// first output word becomes the next seed.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    let mut s = seed;
    for &idx in path {
        let mut rng = ChaCha20Rng::seed_from_u64(s);
        rng.set_stream(idx);
        s = rng.next_u64();
    }
    s
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A CN(0, variance·I) vector of length `n`.
fn complex_gaussian<R: Rng>(rng: &mut R, n: usize, variance: f64) -> CVec {
    let s = (variance / 2.0).sqrt();
    CVec::from_iterator(
        n,
        (0..n).map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(s * re, s * im)
        }),
    )
}

// One ChaCha stream per link class, so changing one dimension (for example
// the number of secondary EHRs) leaves the draws of the other classes intact
// and nests the draws of the changed class.
const STREAM_H_P: u64 = 1;
const STREAM_F_S: u64 = 2;
const STREAM_Q_P: u64 = 3;
const STREAM_H_S: u64 = 4;
const STREAM_G_E1: u64 = 5;
const STREAM_F_E: u64 = 6;
const STREAM_Q_E: u64 = 7;
const STREAM_G_E2: u64 = 8;
const STREAM_PERTURB_Q: u64 = 9;
const STREAM_PERTURB_F: u64 = 10;

/// Draws a Rayleigh-fading channel set; a pure function of `(config, seed)`.
///
/// SUs are relabelled afterwards (together with their PBS channel `q_p`) so
/// that their CBS channel norms are nondecreasing.
pub fn draw_channels(config: &ScenarioConfig, seed: u64) -> ChannelSet {
    let c = config;
    let v = &c.channel_variances;
    let grid = |stream: u64, rows: usize, cols: usize, len: usize, var: f64| {
        let mut rng = stream_rng(seed, stream);
        (0..rows)
            .map(|_| (0..cols).map(|_| complex_gaussian(&mut rng, len, var)).collect())
            .collect::<Vec<Vec<CVec>>>()
    };
    let line = |stream: u64, n: usize, len: usize, var: f64| {
        let mut rng = stream_rng(seed, stream);
        (0..n).map(|_| complex_gaussian(&mut rng, len, var)).collect::<Vec<CVec>>()
    };

    let q_p = line(STREAM_Q_P, c.n_su, c.n_pt, v.q_p);
    let h_s = line(STREAM_H_S, c.n_su, c.n_st, v.h_s);
    let mut order: Vec<usize> = (0..c.n_su).collect();
    order.sort_by(|&a, &b| h_s[a].norm().total_cmp(&h_s[b].norm()));

    ChannelSet {
        h_p: grid(STREAM_H_P, c.m_clusters, c.n_pu_per_cluster, c.n_pt, v.h_p),
        f_s: grid(STREAM_F_S, c.m_clusters, c.n_pu_per_cluster, c.n_st, v.f_s),
        q_p: order.iter().map(|&j| q_p[j].clone()).collect(),
        h_s: order.iter().map(|&j| h_s[j].clone()).collect(),
        g_e1: grid(STREAM_G_E1, c.m_clusters, c.k_ehr_per_cluster, c.n_pt, v.g_e),
        f_e: grid(STREAM_F_E, c.m_clusters, c.k_ehr_per_cluster, c.n_st, v.f_e),
        q_e: line(STREAM_Q_E, c.k_ehr_secondary, c.n_pt, v.q_e),
        g_e2: line(STREAM_G_E2, c.k_ehr_secondary, c.n_st, v.g_e2),
    }
}

/// How perturbations are drawn from the CSI uncertainty balls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallSampling {
    /// Uniform over the ball.
    Uniform,
    /// Uniform over the bounding sphere.
    Surface,
}

/// A uniform point in the complex ball `{z ∈ C^n : ‖z‖ ≤ radius}`.
pub fn sample_ball<R: Rng>(rng: &mut R, n: usize, radius: f64, mode: BallSampling) -> CVec {
    if radius == 0.0 || n == 0 {
        return CVec::zeros(n);
    }
    let dir = complex_gaussian(rng, n, 2.0);
    let norm = dir.norm();
    let r = match mode {
        BallSampling::Surface => radius,
        // The radial density on R^{2n} is proportional to r^{2n-1}.
        BallSampling::Uniform => radius * rng.random::<f64>().powf(1.0 / (2 * n) as f64),
    };
    if norm == 0.0 {
        return CVec::zeros(n);
    }
    dir * C64::new(r / norm, 0.0)
}

/// Perturbs the uncertain links (`q_e` and `f_e`) inside their balls.
pub fn sample_perturbation(nominal: &ChannelSet, config: &ScenarioConfig, seed: u64) -> ChannelSet {
    sample_perturbation_with(nominal, config, seed, BallSampling::Uniform)
}

pub fn sample_perturbation_with(
    nominal: &ChannelSet,
    config: &ScenarioConfig,
    seed: u64,
    mode: BallSampling,
) -> ChannelSet {
    let mut out = nominal.clone();
    let mut rq = stream_rng(seed, STREAM_PERTURB_Q);
    for (l, q) in out.q_e.iter_mut().enumerate() {
        let r = config.radius_q.get(l).copied().unwrap_or(0.0);
        if r > 0.0 {
            *q += sample_ball(&mut rq, q.len(), r, mode);
        }
    }
    let mut rf = stream_rng(seed, STREAM_PERTURB_F);
    for (m, row) in out.f_e.iter_mut().enumerate() {
        for (k, f) in row.iter_mut().enumerate() {
            let r = config.radius_f.get(m).and_then(|v| v.get(k)).copied().unwrap_or(0.0);
            if r > 0.0 {
                *f += sample_ball(&mut rf, f.len(), r, mode);
            }
        }
    }
    out
}
