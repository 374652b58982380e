//! Comparison schemes: TDMA (one SU per time slot) and NOMA without
//! cooperative jamming from the CBS.
//!
//! TDMA shares the PBS design across the `N_s` equal slots. Slot `t` carries
//! `W_{s,t}` and its own jamming covariance. Secrecy log-ratios have the pre-log
//! `1/N_s`, PU secrecy holds in every slot, and harvesting counts the
//! time-averaged RF power.

use serde::{Deserialize, Serialize};

use crate::conic::SolveSettings;
use crate::formulation::Scheme;
use crate::linalg::{self, CMat};
use crate::physics::{
    ehr_rf_powers, harvested_power, log_ratio, psd_records, pu_rate_from, sinr_aggregates, BeamformingSolution,
    ConstraintRecord, PhysicsError, VerificationReport, VerifyTolerances,
};
use crate::scenario::{ChannelSet, ScenarioConfig};
use crate::sca::{run_pipeline, Algorithm, RunOptions, SolveReport};

/// A TDMA design in watts; `w_s[t]` and `sigma_s[t]` belong to slot `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdmaSolution {
    #[serde(with = "crate::physics::mat_list")]
    pub w_p: Vec<CMat>,
    #[serde(with = "crate::physics::mat_list")]
    pub sigma_p: Vec<CMat>,
    #[serde(with = "crate::physics::mat_list")]
    pub w_s: Vec<CMat>,
    #[serde(with = "crate::physics::mat_list")]
    pub sigma_s: Vec<CMat>,
}

impl TdmaSolution {
    /// The network as seen during slot `t`: only SU `t` is served.
    pub fn slot_view(&self, t: usize) -> BeamformingSolution {
        let n_st = self.sigma_s.first().map_or(0, |s| s.nrows());
        let w_s = (0..self.w_s.len()).map(|u| if u == t { self.w_s[u].clone() } else { linalg::zeros(n_st) }).collect();
        BeamformingSolution {
            w_p: self.w_p.clone(),
            sigma_p: self.sigma_p.clone(),
            w_s,
            sigma_s: self.sigma_s[t].clone(),
            w_p_factors: None,
            w_s_factors: None,
        }
    }

    /// Time-averaged transmit power.
    pub fn average_power(&self) -> f64 {
        let t = self.sigma_s.len().max(1) as f64;
        let pbs: f64 = self.w_p.iter().chain(&self.sigma_p).map(linalg::trace_re).sum();
        let cbs: f64 = self.w_s.iter().chain(&self.sigma_s).map(linalg::trace_re).sum();
        pbs + cbs / t
    }
}

fn record(name: String, lhs: f64, rhs: f64, tol: f64) -> ConstraintRecord {
    let slack = lhs - rhs;
    ConstraintRecord { name, lhs, rhs, slack, satisfied: slack >= -tol }
}

/// Independent check of a TDMA design against the secrecy and harvesting targets.
pub fn verify_tdma(sol: &TdmaSolution, ch: &ChannelSet, cfg: &ScenarioConfig) -> Result<VerificationReport, PhysicsError> {
    let n_slots = cfg.n_su;
    if sol.w_s.len() != n_slots || sol.sigma_s.len() != n_slots {
        return Err(PhysicsError::Dimension("TDMA solution needs one slot per SU".into()));
    }
    let tol = VerifyTolerances::default();
    let noise = cfg.noise_power;
    let mut records = Vec::new();
    let mut rf_p = vec![vec![0.0; cfg.k_ehr_per_cluster]; cfg.m_clusters];
    let mut rf_s = vec![0.0; cfg.k_ehr_secondary];
    for t in 0..n_slots {
        let view = sol.slot_view(t);
        let table = sinr_aggregates(&view, ch, cfg)?;
        for m in 0..cfg.m_clusters {
            for i in 0..cfg.n_pu_per_cluster {
                let r = pu_rate_from(&table, &view, ch, cfg, m, i);
                records.push(record(format!("C1[t={t},m={m},i={i}]"), r, cfg.gamma_pu[m][i], tol.rate));
            }
        }
        let pbs = view.pbs_covariance();
        let own = &view.w_s[t] + &view.sigma_s;
        let q = linalg::quad_form;
        let total = q(&pbs, &ch.q_p[t]) + q(&own, &ch.h_s[t]) + noise;
        let legit = log_ratio(total, q(&view.w_s[t], &ch.h_s[t]));
        let eve = (0..cfg.k_ehr_secondary)
            .map(|l| {
                let tot = q(&pbs, &ch.q_e[l]) + q(&own, &ch.g_e2[l]) + noise;
                log_ratio(tot, q(&view.w_s[t], &ch.g_e2[l]))
            })
            .fold(0.0, f64::max);
        let secrecy = ((legit - eve) / n_slots as f64).max(0.0);
        records.push(record(format!("C2[j={t}]"), if secrecy.is_nan() { 0.0 } else { secrecy }, cfg.gamma_su[t], tol.rate));
        let (p, s) = ehr_rf_powers(&table, cfg);
        for (acc, v) in rf_p.iter_mut().flatten().zip(p.iter().flatten()) {
            *acc += v / n_slots as f64;
        }
        for (acc, v) in rf_s.iter_mut().zip(&s) {
            *acc += v / n_slots as f64;
        }
    }
    for (m, row) in rf_p.iter().enumerate() {
        for (k, &rf) in row.iter().enumerate() {
            let phi = harvested_power(rf, &cfg.eh_params)?;
            records.push(record(format!("C3[m={m},k={k}]"), phi, cfg.zeta_primary, tol.power));
        }
    }
    for (l, &rf) in rf_s.iter().enumerate() {
        let phi = harvested_power(rf, &cfg.eh_params)?;
        records.push(record(format!("C4[l={l}]"), phi, cfg.zeta_secondary, tol.power));
    }
    let mut max_gap = 0.0f64;
    for t in 0..n_slots {
        let view = sol.slot_view(t);
        for mut r in psd_records(&view, &tol) {
            if r.name == "C6[Sigma_s]" {
                r.name = format!("C6[Sigma_s,t={t}]");
            } else if t > 0 {
                continue;
            }
            records.push(r);
        }
        max_gap = max_gap.max(view.max_rank_gap());
    }
    Ok(VerificationReport { records, total_power: sol.average_power(), max_rank_gap: max_gap })
}

pub fn run_tdma(ch: &ChannelSet, cfg: &ScenarioConfig) -> SolveReport {
    run_tdma_with(ch, cfg, &SolveSettings::default())
}

pub fn run_tdma_with(ch: &ChannelSet, cfg: &ScenarioConfig, settings: &SolveSettings) -> SolveReport {
    let opts = RunOptions { settings: settings.clone(), ..RunOptions::new(Scheme::Tdma, Algorithm::Penalty) };
    run_pipeline(ch, cfg, &opts)
}

pub fn run_no_cooperation(ch: &ChannelSet, cfg: &ScenarioConfig) -> SolveReport {
    run_no_cooperation_with(ch, cfg, &SolveSettings::default())
}

pub fn run_no_cooperation_with(ch: &ChannelSet, cfg: &ScenarioConfig, settings: &SolveSettings) -> SolveReport {
    let opts = RunOptions { settings: settings.clone(), ..RunOptions::new(Scheme::NomaNocoop, Algorithm::Penalty) };
    run_pipeline(ch, cfg, &opts)
}
