//! Assembly of the convex subproblem solved at every SCA iteration.
//!
//! One builder covers the NOMA design, the TDMA baseline (one time slot per
//! SU) and the no-jamming variant, each optionally with the S-Procedure
//! robust constraints, phase-1 slacks or the eigenvalue-penalty objective.
//!
//! Powers inside a problem are in milliwatts. The reference noise floor is
//! 1e-15 W against milliwatt-level harvesting demands; working in watts would
//! put every received-power quantity at the edge of the solver tolerances.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conic::{AffineExpr, Assignment, ConicProblem, HermVar, ScalarVar, Sign};
use crate::linalg::{self, CMat, CVec};
use crate::penalty::PenaltyState;
use crate::physics::{eh_threshold, BeamformingSolution, PhysicsError};
use crate::robust::ball_lmi;
use crate::scenario::{ChannelSet, ScenarioConfig};

/// Internal power units per watt.
pub const MW_PER_W: f64 = 1e3;

/// Weight of the transmit power in the phase-1 objective.
pub const PHASE1_POWER_WEIGHT: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Noma,
    Tdma,
    NomaNocoop,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Noma, Scheme::Tdma, Scheme::NomaNocoop];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Noma => "noma",
            Scheme::Tdma => "tdma",
            Scheme::NomaNocoop => "noma_nocoop",
        }
    }

    /// SUs served in each time slot.
    pub fn slots(self, n_su: usize) -> Vec<Vec<usize>> {
        match self {
            Scheme::Tdma => (0..n_su).map(|j| vec![j]).collect(),
            _ => vec![(0..n_su).collect()],
        }
    }

    pub fn has_jamming(self) -> bool {
        self != Scheme::NomaNocoop
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scheme::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

/// Expansion points of the tangent under-estimators of one time slot.
///
/// `alpha_s[j][z]` is indexed by absolute SU index `z`; entries with `z < j`
/// are unused. In a TDMA slot only the single-user fields are populated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SCAAnchors {
    pub alpha_p: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub mu_e: Vec<Vec<f64>>,
    #[serde(rename = "alpha_sN")]
    pub alpha_sn: f64,
    #[serde(rename = "beta_sN")]
    pub beta_sn: f64,
    pub mu_el: Vec<f64>,
    pub alpha_s: Vec<Vec<f64>>,
    pub xi_s: Vec<f64>,
    pub mu_elj: Vec<Vec<f64>>,
}

impl SCAAnchors {
    /// All-zero anchors for a slot serving `slot_users` SUs.
    pub fn zeros(cfg: &ScenarioConfig, slot_users: usize) -> Self {
        let weak = slot_users.saturating_sub(1);
        Self {
            alpha_p: vec![vec![0.0; cfg.n_pu_per_cluster]; cfg.m_clusters],
            beta: vec![0.0; cfg.m_clusters],
            mu_e: vec![vec![0.0; cfg.k_ehr_per_cluster]; cfg.m_clusters],
            alpha_sn: 0.0,
            beta_sn: 0.0,
            mu_el: vec![0.0; cfg.k_ehr_secondary],
            alpha_s: vec![vec![0.0; slot_users]; weak],
            xi_s: vec![0.0; weak],
            mu_elj: vec![vec![0.0; weak]; cfg.k_ehr_secondary],
        }
    }

    pub fn is_finite(&self) -> bool {
        let flat = self
            .alpha_p
            .iter()
            .chain(&self.mu_e)
            .chain(&self.alpha_s)
            .chain(&self.mu_elj)
            .flatten()
            .chain(&self.beta)
            .chain(&self.mu_el)
            .chain(&self.xi_s);
        flat.chain([&self.alpha_sn, &self.beta_sn]).all(|x| x.is_finite())
    }

    pub fn get(&self, key: AnchorKey) -> f64 {
        *self.slot(key)
    }

    fn slot(&self, key: AnchorKey) -> &f64 {
        match key {
            AnchorKey::AlphaP(m, i) => &self.alpha_p[m][i],
            AnchorKey::Beta(m) => &self.beta[m],
            AnchorKey::MuE(m, k) => &self.mu_e[m][k],
            AnchorKey::AlphaSN => &self.alpha_sn,
            AnchorKey::BetaSN => &self.beta_sn,
            AnchorKey::MuEl(l) => &self.mu_el[l],
            AnchorKey::AlphaS(j, z) => &self.alpha_s[j][z],
            AnchorKey::XiS(j) => &self.xi_s[j],
            AnchorKey::MuElj(l, j) => &self.mu_elj[l][j],
        }
    }

    pub fn set(&mut self, key: AnchorKey, v: f64) {
        let r = match key {
            AnchorKey::AlphaP(m, i) => &mut self.alpha_p[m][i],
            AnchorKey::Beta(m) => &mut self.beta[m],
            AnchorKey::MuE(m, k) => &mut self.mu_e[m][k],
            AnchorKey::AlphaSN => &mut self.alpha_sn,
            AnchorKey::BetaSN => &mut self.beta_sn,
            AnchorKey::MuEl(l) => &mut self.mu_el[l],
            AnchorKey::AlphaS(j, z) => &mut self.alpha_s[j][z],
            AnchorKey::XiS(j) => &mut self.xi_s[j],
            AnchorKey::MuElj(l, j) => &mut self.mu_elj[l][j],
        };
        *r = v;
    }
}

/// Which anchor a tangent constraint is expanded around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnchorKey {
    AlphaP(usize, usize),
    Beta(usize),
    MuE(usize, usize),
    AlphaSN,
    BetaSN,
    MuEl(usize),
    AlphaS(usize, usize),
    XiS(usize),
    MuElj(usize, usize),
}

/// Starting value of an anchor from a covariance-only evaluation:
/// `offset + max_k [ln num_k − ln den_k]`.
#[derive(Debug, Clone, PartialEq)]
struct InitRule {
    pairs: Vec<(AffineExpr, Option<AffineExpr>)>,
    offset: f64,
}

impl InitRule {
    fn log_of(e: AffineExpr) -> Self {
        Self { pairs: vec![(e, None)], offset: 0.0 }
    }

    fn eval(&self, a: &Assignment) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (num, den) in &self.pairs {
            let n = num.eval(a);
            let d = den.as_ref().map_or(1.0, |d| d.eval(a));
            if n > 0.0 && d > 0.0 {
                let v = n.ln() - d.ln();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best.map(|b| b + self.offset)
    }
}

/// A tangent constraint `Q ≤ e^{x̃}(x − x̃ + 1)` and how to move its anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub slot: usize,
    pub key: AnchorKey,
    pub var: ScalarVar,
    /// `Q` when it is an affine function of the problem variables.
    pub tight: Option<AffineExpr>,
    init: InitRule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions<'a> {
    pub scheme: Scheme,
    pub robust: bool,
    pub phase1: bool,
    pub penalty: Option<&'a PenaltyState>,
}

impl BuildOptions<'_> {
    pub fn new(scheme: Scheme) -> Self {
        Self { scheme, robust: false, phase1: false, penalty: None }
    }
}

/// Matrix variables in creation order; the order is identical across builds
/// with the same scheme, so covariance values can be carried between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Vars {
    pub w_p: Vec<HermVar>,
    pub sigma_p: Vec<HermVar>,
    pub w_s: Vec<HermVar>,
    /// One jamming covariance per slot; empty without cooperative jamming.
    pub sigma_s: Vec<HermVar>,
    pub slots: Vec<Vec<usize>>,
}

/// A built problem with the bookkeeping needed to interpret its solution.
#[derive(Debug, Clone)]
pub struct Built {
    pub problem: ConicProblem,
    pub vars: Vars,
    pub scheme: Scheme,
    pub tangents: Vec<Tangent>,
    pub slacks: Vec<ScalarVar>,
    /// S-Procedure multipliers.
    pub multipliers: Vec<ScalarVar>,
    power: AffineExpr,
}

impl Built {
    /// Transmit power in watts (time-averaged for TDMA).
    pub fn power_w(&self, a: &Assignment) -> f64 {
        self.power.eval(a) / MW_PER_W
    }

    pub fn slack_total(&self, a: &Assignment) -> f64 {
        self.slacks.iter().map(|&s| a.scalar(s)).sum()
    }

    /// Anchor update from a solution: `x̃ ← ln Q` when the tangent input `Q`
    /// is affine and `ln Q ≤ x`, otherwise `x̃ ← x`.
    pub fn updated_anchors(&self, a: &Assignment, anchors: &[SCAAnchors]) -> Vec<SCAAnchors> {
        let mut next = anchors.to_vec();
        for t in &self.tangents {
            let x = a.scalar(t.var);
            let q = t.tight.as_ref().map(|q| q.eval(a)).filter(|&q| q > 0.0).map(f64::ln);
            let v = match q {
                Some(lq) if lq <= x => lq,
                _ => x,
            };
            if v.is_finite() {
                next[t.slot].set(t.key, v);
            }
        }
        next
    }

    /// Anchors read off covariance values alone (scalars are ignored).
    pub fn anchors_from_covariances(&self, herm: &[CMat], base: &[SCAAnchors]) -> Vec<SCAAnchors> {
        let a = Assignment { herm: herm.to_vec(), scalars: vec![0.0; self.problem.scalar_vars.len()] };
        let mut next = base.to_vec();
        for t in &self.tangents {
            if let Some(v) = t.init.eval(&a) {
                next[t.slot].set(t.key, v);
            }
        }
        next
    }

    /// The design in watts; TDMA jamming covariances are averaged over slots.
    pub fn solution(&self, a: &Assignment, cfg: &ScenarioConfig) -> BeamformingSolution {
        let w = |x: &HermVar| linalg::real_scale(a.herm(*x), 1.0 / MW_PER_W);
        let mut sigma_s = linalg::zeros(cfg.n_st);
        let t = self.vars.sigma_s.len().max(1) as f64;
        for x in &self.vars.sigma_s {
            sigma_s += linalg::real_scale(&w(x), 1.0 / t);
        }
        BeamformingSolution {
            w_p: self.vars.w_p.iter().map(w).collect(),
            sigma_p: self.vars.sigma_p.iter().map(w).collect(),
            w_s: self.vars.w_s.iter().map(w).collect(),
            sigma_s,
            w_p_factors: None,
            w_s_factors: None,
        }
    }

    /// Per-slot jamming covariances in watts.
    pub fn slot_jamming(&self, a: &Assignment) -> Vec<CMat> {
        self.vars.sigma_s.iter().map(|x| linalg::real_scale(a.herm(*x), 1.0 / MW_PER_W)).collect()
    }

    /// Covariances in internal units, suitable for [`Built::anchors_from_covariances`].
    pub fn covariances(&self, a: &Assignment) -> Vec<CMat> {
        a.herm.clone()
    }
}

/// Anchors of every slot for `scheme`, all zero.
pub fn zero_anchors(cfg: &ScenarioConfig, scheme: Scheme) -> Vec<SCAAnchors> {
    scheme.slots(cfg.n_su).iter().map(|s| SCAAnchors::zeros(cfg, s.len())).collect()
}

struct Builder<'a> {
    cfg: &'a ScenarioConfig,
    ch: &'a ChannelSet,
    opts: BuildOptions<'a>,
    anchors: &'a [SCAAnchors],
    p: ConicProblem,
    vars: Vars,
    tangents: Vec<Tangent>,
    slacks: Vec<ScalarVar>,
    multipliers: Vec<ScalarVar>,
    noise: f64,
}

type Terms = Vec<(HermVar, f64)>;

fn quad(terms: &Terms, h: &CVec) -> AffineExpr {
    let mut e = AffineExpr::default();
    for &(x, c) in terms {
        e.add_quad(x, h, c);
    }
    e
}

fn var(x: ScalarVar) -> AffineExpr {
    AffineExpr::scalar(x)
}

impl<'a> Builder<'a> {
    fn new(ch: &'a ChannelSet, cfg: &'a ScenarioConfig, anchors: &'a [SCAAnchors], opts: BuildOptions<'a>) -> Self {
        let mut p = ConicProblem::new();
        let slots = opts.scheme.slots(cfg.n_su);
        let w_p = (0..cfg.m_clusters).map(|m| p.herm_var(format!("W_p[{m}]"), cfg.n_pt)).collect();
        let sigma_p = (0..cfg.m_clusters).map(|m| p.herm_var(format!("Sigma_p[{m}]"), cfg.n_pt)).collect();
        let w_s = (0..cfg.n_su).map(|j| p.herm_var(format!("W_s[{j}]"), cfg.n_st)).collect();
        let sigma_s = if opts.scheme.has_jamming() {
            (0..slots.len()).map(|t| p.herm_var(format!("Sigma_s[{t}]"), cfg.n_st)).collect()
        } else {
            Vec::new()
        };
        Self {
            cfg,
            ch,
            opts,
            anchors,
            p,
            vars: Vars { w_p, sigma_p, w_s, sigma_s, slots },
            tangents: Vec::new(),
            slacks: Vec::new(),
            multipliers: Vec::new(),
            noise: cfg.noise_power * MW_PER_W,
        }
    }

    fn scalar(&mut self, name: String) -> ScalarVar {
        self.p.scalar_var(name, Sign::Free)
    }

    fn multiplier(&mut self, name: String) -> ScalarVar {
        let s = self.p.scalar_var(name, Sign::Nonneg);
        self.multipliers.push(s);
        s
    }

    fn pbs_terms(&self) -> Terms {
        self.vars.w_p.iter().chain(&self.vars.sigma_p).map(|&x| (x, 1.0)).collect()
    }

    /// `Σ_{u ∈ slot, u ≥ from} W_{s,u} (+ Σ_s of the slot)`.
    fn cbs_terms(&self, t: usize, from: usize, jamming: bool) -> Terms {
        let mut v: Terms = self.vars.slots[t].iter().filter(|&&u| u >= from).map(|&u| (self.vars.w_s[u], 1.0)).collect();
        if jamming {
            if let Some(&s) = self.vars.sigma_s.get(t) {
                v.push((s, 1.0));
            }
        }
        v
    }

    fn anchor(&self, t: usize, key: AnchorKey) -> f64 {
        self.anchors[t].get(key)
    }

    /// `e^{x̃}(x − x̃ + 1)`, plus a scaled slack in phase 1.
    fn tangent_bound(&mut self, label: &str, x: ScalarVar, t: usize, key: AnchorKey) -> AffineExpr {
        let a = self.anchor(t, key);
        let mut e = var(x).plus_const(1.0 - a);
        if self.opts.phase1 {
            let s = self.p.scalar_var(format!("slack:{label}"), Sign::Nonneg);
            self.slacks.push(s);
            e.add_scalar(s, 1.0);
        }
        e.scaled(a.exp())
    }

    /// `q ≤ e^{x̃}(x − x̃ + 1)`, stored with both sides divided by `e^{x̃}`.
    fn tangent(&mut self, label: String, q: AffineExpr, x: ScalarVar, t: usize, key: AnchorKey, init: InitRule) {
        let a = self.anchor(t, key);
        let mut rhs = var(x).plus_const(1.0 - a);
        if self.opts.phase1 {
            let s = self.p.scalar_var(format!("slack:{label}"), Sign::Nonneg);
            self.slacks.push(s);
            rhs.add_scalar(s, 1.0);
        }
        self.p.le(label, q.scaled((-a).exp()), &rhs);
        self.tangents.push(Tangent { slot: t, key, var: x, tight: Some(q), init });
    }

    /// `bound ≥ exp(x)`, evaluated as `exp(x − c) ≤ e^{−c}·bound` to keep
    /// both cone entries near unity.
    fn exp_ge(&mut self, label: String, bound: AffineExpr, x: ScalarVar, shift: f64) {
        self.p.exp_le(label, var(x).plus_const(-shift), bound.scaled((-shift).exp()));
    }

    fn build(mut self) -> Result<Built, PhysicsError> {
        for t in 0..self.vars.slots.len() {
            self.pu_blocks(t);
            let users = self.vars.slots[t].clone();
            let Some(&last) = users.last() else { continue };
            let prelog = users.len() as f64 / self.cfg.n_su as f64;
            let gamma = self.cfg.gamma_su[last] / prelog;
            if gamma > 0.0 {
                self.su_strongest(t, last, gamma);
            }
            for &j in &users[..users.len() - 1] {
                if self.cfg.gamma_su[j] > 0.0 {
                    self.su_weak(t, j);
                }
            }
        }
        self.harvesting()?;

        let mut power = AffineExpr::default();
        let slot_weight = 1.0 / self.vars.slots.len() as f64;
        for &x in self.vars.w_p.iter().chain(&self.vars.sigma_p) {
            power.add_trace(x, &linalg::identity(self.cfg.n_pt));
        }
        let per_slot = if self.opts.scheme == Scheme::Tdma { slot_weight } else { 1.0 };
        for &x in self.vars.w_s.iter().chain(&self.vars.sigma_s) {
            power.add_trace(x, &linalg::real_scale(&linalg::identity(self.cfg.n_st), per_slot));
        }
        let objective = if self.opts.phase1 {
            let mut o = power.scaled(PHASE1_POWER_WEIGHT);
            for &s in &self.slacks {
                o.add_scalar(s, 1.0);
            }
            o
        } else {
            let mut o = power.clone();
            if let Some(ps) = self.opts.penalty {
                o.add_expr(&ps.penalty_expr(&self.vars), 1.0);
            }
            o
        };
        self.p.set_objective(objective);
        Ok(Built {
            problem: self.p,
            vars: self.vars,
            scheme: self.opts.scheme,
            tangents: self.tangents,
            slacks: self.slacks,
            multipliers: self.multipliers,
            power,
        })
    }

    fn pu_blocks(&mut self, t: usize) {
        let (cfg, ch) = (self.cfg, self.ch);
        let noise = self.noise;
        let pbs = self.pbs_terms();
        let cbs = self.cbs_terms(t, 0, true);
        for m in 0..cfg.m_clusters {
            let active: Vec<usize> = (0..cfg.n_pu_per_cluster).filter(|&i| cfg.gamma_pu[m][i] > 0.0).collect();
            if active.is_empty() {
                continue;
            }
            let tag = format!("t={t},m={m}");
            let tau = self.scalar(format!("tau[{tag}]"));
            let beta = self.scalar(format!("beta[{tag}]"));
            let own = vec![(self.vars.w_p[m], 1.0)];
            for &i in &active {
                let tag = format!("{tag},i={i}");
                let alpha = self.scalar(format!("alpha[{tag}]"));
                let lambda = self.scalar(format!("lambda[{tag}]"));
                let rhs = AffineExpr::constant(-cfg.gamma_pu[m][i] * LN_2);
                self.p.le(format!("pu_split[{tag}]"), var(alpha).plus_scalar(beta, 1.0).plus_scalar(lambda, -1.0), &rhs);
                let total = quad(&pbs, &ch.h_p[m][i]).plus_expr(&quad(&cbs, &ch.f_s[m][i]), 1.0).plus_const(noise);
                let rest = total.clone().plus_expr(&quad(&own, &ch.h_p[m][i]), -1.0);
                let key = AnchorKey::AlphaP(m, i);
                self.tangent(format!("pu_interference_tangent[{tag}]"), rest.clone(), alpha, t, key, InitRule::log_of(rest));
                let shift = self.anchor(t, key);
                self.exp_ge(format!("pu_signal_exp[{tag}]"), total, lambda, shift);
            }
            let mut leak_init = InitRule { pairs: Vec::new(), offset: 0.0 };
            for k in 0..cfg.k_ehr_per_cluster {
                let g = &ch.g_e1[m][k];
                let nominal = quad(&pbs, g).plus_expr(&quad(&cbs, &ch.f_e[m][k]), 1.0).plus_const(noise);
                leak_init.pairs.push((nominal.clone(), Some(nominal.plus_expr(&quad(&own, g), -1.0))));
            }
            self.tangent(format!("pu_leak_tangent[{tag}]"), var(tau), beta, t, AnchorKey::Beta(m), leak_init);
            let beta_shift = self.anchor(t, AnchorKey::Beta(m));
            for k in 0..cfg.k_ehr_per_cluster {
                let tag = format!("{tag},k={k}");
                let mu = self.scalar(format!("mu[{tag}]"));
                let rho = self.scalar(format!("rho[{tag}]"));
                let delta = self.scalar(format!("delta[{tag}]"));
                self.p.le(
                    format!("pu_eve_split[{tag}]"),
                    var(mu).plus_scalar(rho, -1.0).plus_scalar(delta, -1.0),
                    &AffineExpr::constant(0.0),
                );
                let g = &ch.g_e1[m][k];
                let f = &ch.f_e[m][k];
                let pbs_part = quad(&pbs, g);
                let nominal_cbs = quad(&cbs, f);
                let (upper, lower) = if self.opts.robust {
                    let theta = self.scalar(format!("theta[{tag}]"));
                    let o = self.scalar(format!("o[{tag}]"));
                    let r = cfg.radius_f[m][k];
                    let s1 = self.multiplier(format!("lambda_bar[{tag}]"));
                    let lmi = ball_lmi(&cbs, f, -1.0, &var(theta), r, s1);
                    self.p.lmi(format!("pu_eve_upper_lmi[{tag}]"), lmi);
                    let s2 = self.multiplier(format!("u_bar[{tag}]"));
                    let lmi = ball_lmi(&cbs, f, 1.0, &var(o).scaled(-1.0), r, s2);
                    self.p.lmi(format!("pu_eve_lower_lmi[{tag}]"), lmi);
                    (pbs_part.clone().plus_scalar(theta, 1.0), pbs_part.plus_scalar(o, 1.0))
                } else {
                    let e = pbs_part.plus_expr(&nominal_cbs, 1.0);
                    (e.clone(), e)
                };
                let key = AnchorKey::MuE(m, k);
                let init = InitRule::log_of(quad(&pbs, g).plus_expr(&nominal_cbs, 1.0).plus_const(noise));
                self.tangent(format!("pu_eve_total_tangent[{tag}]"), upper.plus_const(noise), mu, t, key, init);
                let rest = lower.plus_expr(&quad(&own, g), -1.0).plus_const(noise);
                let shift = self.anchor(t, key);
                self.exp_ge(format!("pu_eve_rest_exp[{tag}]"), rest, rho, shift);
                self.exp_ge(format!("pu_leak_exp[{tag}]"), var(tau), delta, beta_shift);
            }
        }
    }

    /// Eavesdropper-side pair for SU `j` at secondary EHR `l`: the total
    /// `Λ ≤ tangent(μ)` and the remainder `Λ − S ≥ e^ρ`. `total_terms`
    /// collects the CBS covariances seen in `Λ`, `rest_terms` those left
    /// after removing the SU's own signal.
    #[allow(clippy::too_many_arguments)]
    fn eve_pair(
        &mut self,
        family: &str,
        tag: &str,
        t: usize,
        key: AnchorKey,
        mu: ScalarVar,
        rho: ScalarVar,
        l: usize,
        total_terms: &Terms,
        rest_terms: &Terms,
    ) {
        let (cfg, ch) = (self.cfg, self.ch);
        let noise = self.noise;
        let pbs = self.pbs_terms();
        let (q, g) = (&ch.q_e[l], &ch.g_e2[l]);
        let nominal = quad(&pbs, q).plus_expr(&quad(total_terms, g), 1.0).plus_const(noise);
        let shift = self.anchor(t, key);
        if self.opts.robust {
            let r = cfg.radius_q[l];
            let label = format!("{family}_total_lmi[{tag}]");
            let bound = self.tangent_bound(&label, mu, t, key);
            let corner = bound.plus_expr(&quad(total_terms, g), -1.0).plus_const(-noise);
            let s1 = self.multiplier(format!("omega_bar[{tag}]"));
            self.p.lmi(label, ball_lmi(&pbs, q, -1.0, &corner, r, s1));
            self.tangents.push(Tangent { slot: t, key, var: mu, tight: None, init: InitRule::log_of(nominal) });
            let floor = self.scalar(format!("rest[{tag}]"));
            self.exp_ge(format!("{family}_rest_exp[{tag}]"), var(floor), rho, shift);
            let corner = quad(rest_terms, g).plus_const(noise).plus_scalar(floor, -1.0);
            let s2 = self.multiplier(format!("kappa_bar[{tag}]"));
            self.p.lmi(format!("{family}_rest_lmi[{tag}]"), ball_lmi(&pbs, q, 1.0, &corner, r, s2));
        } else {
            let rest = quad(&pbs, q).plus_expr(&quad(rest_terms, g), 1.0).plus_const(noise);
            self.tangent(format!("{family}_total_tangent[{tag}]"), nominal.clone(), mu, t, key, InitRule::log_of(nominal));
            self.exp_ge(format!("{family}_rest_exp[{tag}]"), rest, rho, shift);
        }
    }

    /// The SU decoded last in slot `t` (no SIC stage after it).
    fn su_strongest(&mut self, t: usize, u: usize, gamma: f64) {
        let (cfg, ch) = (self.cfg, self.ch);
        let noise = self.noise;
        let pbs = self.pbs_terms();
        let own_plus_jam = self.cbs_terms(t, u, true);
        let jam = self.cbs_terms(t, usize::MAX, true);
        let own = vec![(self.vars.w_s[u], 1.0)];
        let tag = format!("t={t},j={u}");
        let alpha = self.scalar(format!("alpha_sN[{tag}]"));
        let beta = self.scalar(format!("beta_sN[{tag}]"));
        let lambda = self.scalar(format!("lambda_sN[{tag}]"));
        let tau = self.scalar(format!("tau_sN[{tag}]"));
        let omega = self.scalar(format!("omega_sN[{tag}]"));
        let rhs = AffineExpr::constant(-gamma * LN_2);
        self.p.le(format!("su_split[{tag}]"), var(alpha).plus_scalar(beta, 1.0).plus_scalar(lambda, -1.0), &rhs);
        let h = &ch.h_s[u];
        let total = quad(&pbs, &ch.q_p[u]).plus_expr(&quad(&own_plus_jam, h), 1.0).plus_const(noise);
        let rest = total.clone().plus_expr(&quad(&own, h), -1.0);
        self.tangent(format!("su_interference_tangent[{tag}]"), rest.clone(), alpha, t, AnchorKey::AlphaSN, InitRule::log_of(rest));
        let mut leak = InitRule { pairs: Vec::new(), offset: 0.0 };
        for l in 0..cfg.k_ehr_secondary {
            let (q, g) = (&ch.q_e[l], &ch.g_e2[l]);
            let tot = quad(&pbs, q).plus_expr(&quad(&own_plus_jam, g), 1.0).plus_const(noise);
            let res = quad(&pbs, q).plus_expr(&quad(&jam, g), 1.0).plus_const(noise);
            leak.pairs.push((tot, Some(res)));
        }
        self.tangent(format!("su_leak_tangent[{tag}]"), var(tau), beta, t, AnchorKey::BetaSN, leak);
        let shift = self.anchor(t, AnchorKey::AlphaSN);
        self.exp_ge(format!("su_signal_exp[{tag}]"), total, lambda, shift);
        for l in 0..cfg.k_ehr_secondary {
            let tag = format!("{tag},l={l}");
            let mu = self.scalar(format!("mu_el[{tag}]"));
            let rho = self.scalar(format!("rho_sl[{tag}]"));
            self.p.le(
                format!("su_eve_split[{tag}]"),
                var(mu).plus_scalar(rho, -1.0).plus_scalar(omega, -1.0),
                &AffineExpr::constant(0.0),
            );
            self.eve_pair("su_eve", &tag, t, AnchorKey::MuEl(l), mu, rho, l, &own_plus_jam, &jam);
        }
        let shift = self.anchor(t, AnchorKey::BetaSN);
        self.exp_ge(format!("su_leak_exp[{tag}]"), var(tau), omega, shift);
    }

    /// An SU `j` that is not decoded last; its rate is the minimum over the
    /// SUs `z` that decode it during SIC.
    fn su_weak(&mut self, t: usize, j: usize) {
        let (cfg, ch) = (self.cfg, self.ch);
        let noise = self.noise;
        let gamma = cfg.gamma_su[j];
        let pbs = self.pbs_terms();
        let tail = self.cbs_terms(t, j, true);
        let after = self.cbs_terms(t, j + 1, true);
        let own = vec![(self.vars.w_s[j], 1.0)];
        let tag = format!("t={t},j={j}");
        let kappa = self.scalar(format!("kappa[{tag}]"));
        let omega = self.scalar(format!("omega[{tag}]"));
        let xi = self.scalar(format!("xi[{tag}]"));
        let tau = self.scalar(format!("tau_s[{tag}]"));
        let xi_anchor = self.anchor(t, AnchorKey::XiS(j));
        let scale = (-xi_anchor).exp();
        self.p.ge(
            format!("su_weak_margin[{tag}]"),
            var(kappa).plus_scalar(omega, -gamma.exp2()).scaled(scale),
            &AffineExpr::constant(0.0),
        );
        for z in cfg.sic_indices(j) {
            let tag = format!("{tag},z={z}");
            let alpha = self.scalar(format!("alpha_s[{tag}]"));
            let lambda = self.scalar(format!("lambda_s[{tag}]"));
            self.p.le(
                format!("su_weak_split[{tag}]"),
                var(alpha).plus_scalar(xi, 1.0).plus_scalar(lambda, -1.0),
                &AffineExpr::constant(0.0),
            );
            let h = &ch.h_s[z];
            let total = quad(&pbs, &ch.q_p[z]).plus_expr(&quad(&tail, h), 1.0).plus_const(noise);
            let rest = total.clone().plus_expr(&quad(&own, h), -1.0);
            let key = AnchorKey::AlphaS(j, z);
            self.tangent(format!("su_weak_interference_tangent[{tag}]"), rest.clone(), alpha, t, key, InitRule::log_of(rest));
            let shift = self.anchor(t, key);
            self.exp_ge(format!("su_weak_signal_exp[{tag}]"), total, lambda, shift);
        }
        let mut leak = InitRule { pairs: Vec::new(), offset: gamma * LN_2 };
        for l in 0..cfg.k_ehr_secondary {
            let (q, g) = (&ch.q_e[l], &ch.g_e2[l]);
            let tot = quad(&pbs, q).plus_expr(&quad(&tail, g), 1.0).plus_const(noise);
            let res = quad(&pbs, q).plus_expr(&quad(&after, g), 1.0).plus_const(noise);
            leak.pairs.push((tot, Some(res)));
        }
        self.tangent(format!("su_weak_leak_tangent[{tag}]"), var(kappa), xi, t, AnchorKey::XiS(j), leak);
        for l in 0..cfg.k_ehr_secondary {
            let tag = format!("{tag},l={l}");
            let mu = self.scalar(format!("mu_elj[{tag}]"));
            let rho = self.scalar(format!("rho_slj[{tag}]"));
            self.p.le(
                format!("su_weak_eve_split[{tag}]"),
                var(mu).plus_scalar(rho, -1.0).plus_scalar(tau, -1.0),
                &AffineExpr::constant(0.0),
            );
            self.eve_pair("su_weak_eve", &tag, t, AnchorKey::MuElj(l, j), mu, rho, l, &tail, &after);
        }
        self.exp_ge(format!("su_weak_leak_exp[{tag}]"), var(omega), tau, xi_anchor - gamma * LN_2);
    }

    fn harvesting(&mut self) -> Result<(), PhysicsError> {
        let (cfg, ch) = (self.cfg, self.ch);
        let pbs = self.pbs_terms();
        let n_slots = self.vars.slots.len();
        let mut cbs_avg: Terms = Vec::new();
        for t in 0..n_slots {
            for (x, c) in self.cbs_terms(t, 0, true) {
                cbs_avg.push((x, c / n_slots as f64));
            }
        }
        if cfg.zeta_primary > 0.0 {
            let req = eh_threshold(cfg.zeta_primary, &cfg.eh_params)? * MW_PER_W;
            for m in 0..cfg.m_clusters {
                for k in 0..cfg.k_ehr_per_cluster {
                    let tag = format!("m={m},k={k}");
                    let pbs_part = quad(&pbs, &ch.g_e1[m][k]);
                    if self.opts.robust {
                        let s = self.multiplier(format!("chi_bar[{tag}]"));
                        let corner = pbs_part.plus_const(-req);
                        let lmi = ball_lmi(&cbs_avg, &ch.f_e[m][k], 1.0, &corner, cfg.radius_f[m][k], s);
                        self.p.lmi(format!("eh_primary_lmi[{tag}]"), lmi);
                    } else {
                        let rf = pbs_part.plus_expr(&quad(&cbs_avg, &ch.f_e[m][k]), 1.0);
                        self.p.ge(format!("eh_primary[{tag}]"), rf, &AffineExpr::constant(req));
                    }
                }
            }
        }
        if cfg.zeta_secondary > 0.0 {
            let req = eh_threshold(cfg.zeta_secondary, &cfg.eh_params)? * MW_PER_W;
            for l in 0..cfg.k_ehr_secondary {
                let tag = format!("l={l}");
                let cbs_part = quad(&cbs_avg, &ch.g_e2[l]);
                if self.opts.robust {
                    let s = self.multiplier(format!("phi_bar[{tag}]"));
                    let corner = cbs_part.plus_const(-req);
                    let lmi = ball_lmi(&pbs, &ch.q_e[l], 1.0, &corner, cfg.radius_q[l], s);
                    self.p.lmi(format!("eh_secondary_lmi[{tag}]"), lmi);
                } else {
                    let rf = quad(&pbs, &ch.q_e[l]).plus_expr(&cbs_part, 1.0);
                    self.p.ge(format!("eh_secondary[{tag}]"), rf, &AffineExpr::constant(req));
                }
            }
        }
        Ok(())
    }
}

/// Builds the subproblem for `anchors` (one entry per time slot of the scheme).
pub fn build(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    anchors: &[SCAAnchors],
    opts: BuildOptions<'_>,
) -> Result<Built, PhysicsError> {
    let slots = opts.scheme.slots(cfg.n_su).len();
    if anchors.len() != slots {
        return Err(PhysicsError::Dimension(format!("{} anchor sets for {slots} slots", anchors.len())));
    }
    Builder::new(ch, cfg, anchors, opts).build()
}

/// PSD variable count followed by the constraint census of `problem`.
pub fn census_with_psd(problem: &ConicProblem) -> Vec<(String, usize)> {
    let mut v = vec![("psd".to_string(), problem.herm_vars.len())];
    v.extend(problem.census());
    v
}
