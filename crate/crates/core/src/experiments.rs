//! Monte Carlo orchestration: sweeps, trials, CSV and plot emission.
//!
//! Channels are drawn from `(seed, trial)` only, so every sweep point and
//! every scheme of one trial sees the same realization; the randomized
//! post-processing of each run uses `(seed, trial, sweep index)`.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formulation::Scheme;
use crate::sca::{all_rank_one, run_pipeline, Algorithm, RunOptions, SolveReport, DEFAULT_RANDOMIZATION_SAMPLES};
use crate::scenario::{child_seed, draw_channels, watts_to_dbm, ScenarioConfig};

pub const RAW_HEADER: &str = "sweep_value,trial,scheme,power_W,iterations,max_rank_gap,status";
pub const AGGREGATE_HEADER: &str =
    "sweep_value,scheme,trials,succeeded,mean_power_W,median_power_W,q10_power_W,q25_power_W,q75_power_W,q90_power_W";
pub const TRAJECTORY_HEADER: &str = "trial,scheme,iteration,power_W";
pub const CENSUS_HEADER: &str = "k_s,trials,alg1_rank_one,alg2_rank_one";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Table4,
}

impl FigureId {
    pub const ALL: [FigureId; 6] = [Self::Fig2, Self::Fig3, Self::Fig4, Self::Fig5, Self::Fig6, Self::Table4];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Table4 => "table4",
        }
    }

    /// Name of the swept quantity, used in plot labels.
    pub fn sweep_label(self) -> &'static str {
        match self {
            Self::Fig2 | Self::Table4 => "number of secondary EHRs K_s",
            Self::Fig3 | Self::Fig4 => "PU secrecy target (bits/s/Hz)",
            Self::Fig5 => "CSI error radius",
            Self::Fig6 => "secondary EH target (W)",
        }
    }

    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            Self::Fig2 | Self::Table4 => vec![1.0, 2.0, 3.0],
            Self::Fig3 => vec![1.0, 2.0, 3.0],
            Self::Fig4 => vec![2.0],
            Self::Fig5 => vec![1e-2],
            Self::Fig6 => vec![2e-3, 5e-3, 1e-2],
        }
    }

    pub fn default_schemes(self) -> Vec<SchemeId> {
        use SchemeId::*;
        match self {
            Self::Fig2 | Self::Fig3 | Self::Fig6 => vec![Alg1, Alg2, Tdma, NomaNocoop],
            Self::Fig4 | Self::Table4 => vec![Alg1, Alg2],
            Self::Fig5 => vec![Alg2, Robust],
        }
    }

    /// The configuration at one sweep point.
    pub fn configure(self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let base = base.clone();
        match self {
            Self::Fig2 | Self::Table4 => base.with_k_ehr_secondary(value.round().max(0.0) as usize),
            Self::Fig3 | Self::Fig4 => base.with_gamma_pu(value),
            Self::Fig5 => base.with_radius(value),
            Self::Fig6 => base.with_zeta_secondary(value),
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| format!("unknown figure '{s}'"))
    }
}

/// A pipeline as it appears in the CSV `scheme` column. Declaration order
/// is the row order within one `(sweep_value, trial)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    /// NOMA, SCA with relaxation and Gaussian randomization.
    Alg1,
    /// NOMA, SCA with the eigenvalue penalty.
    Alg2,
    /// NOMA under bounded CSI errors.
    Robust,
    Tdma,
    NomaNocoop,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [Self::Alg1, Self::Alg2, Self::Robust, Self::Tdma, Self::NomaNocoop];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Alg1 => "alg1",
            Self::Alg2 => "alg2",
            Self::Robust => "robust",
            Self::Tdma => "tdma",
            Self::NomaNocoop => "noma_nocoop",
        }
    }

    pub fn run_options(self) -> RunOptions {
        match self {
            Self::Alg1 => RunOptions {
                randomization_samples: Some(DEFAULT_RANDOMIZATION_SAMPLES),
                ..RunOptions::new(Scheme::Noma, Algorithm::Sdr)
            },
            Self::Alg2 => RunOptions::new(Scheme::Noma, Algorithm::Penalty),
            Self::Robust => RunOptions { robust: true, ..RunOptions::new(Scheme::Noma, Algorithm::Penalty) },
            Self::Tdma => RunOptions::new(Scheme::Tdma, Algorithm::Penalty),
            Self::NomaNocoop => RunOptions::new(Scheme::NomaNocoop, Algorithm::Penalty),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub figure: FigureId,
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<SchemeId>,
    pub out_dir: PathBuf,
    pub plots: bool,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
}

impl ExperimentSpec {
    pub fn new(figure: FigureId, trials: usize, seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            figure,
            sweep: figure.default_sweep(),
            trials,
            seed,
            schemes: figure.default_schemes(),
            out_dir: out_dir.into(),
            plots: true,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.sweep.is_empty() || self.sweep.iter().any(|v| !v.is_finite()) {
            return Err(ExperimentError::Spec("sweep values must be finite and nonempty".into()));
        }
        if self.trials == 0 {
            return Err(ExperimentError::Spec("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(ExperimentError::Spec("scheme list is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("plot: {0}")]
    Plot(String),
}

/// One raw CSV row plus the per-run facts the derived tables need.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep_value: f64,
    pub trial: usize,
    pub scheme: SchemeId,
    pub power_w: f64,
    pub iterations: usize,
    pub max_rank_gap: f64,
    pub status: String,
    /// Every information matrix passes the rank-one test (before randomization).
    pub rank_one: bool,
    pub trajectory: Vec<f64>,
}

impl Row {
    pub fn succeeded(&self) -> bool {
        matches!(self.status.as_str(), "converged" | "max_iterations") && self.power_w.is_finite()
    }
}

/// Scientific notation with 10 significant digits.
pub fn sci(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.9e}")
    }
}

/// Power of a report as the CSV records it: Algorithm 1 reports its
/// randomized design whenever randomization ran.
fn row_from_report(sweep_value: f64, trial: usize, scheme: SchemeId, r: &SolveReport, tol: f64) -> Row {
    let mut status = r.status.as_str().to_string();
    let mut power = r.power_w.unwrap_or(f64::NAN);
    if let Some(rand) = &r.randomized {
        match rand.power_w {
            Some(p) if rand.feasible => power = p,
            _ => {
                status = "randomization_failed".into();
                power = f64::NAN;
            }
        }
    }
    if !r.succeeded() {
        power = f64::NAN;
    }
    Row {
        sweep_value,
        trial,
        scheme,
        power_w: power,
        iterations: r.iterations.len(),
        max_rank_gap: r.max_rank_gap.unwrap_or(f64::NAN),
        status,
        rank_one: r.solution.as_ref().is_some_and(|s| all_rank_one(s, tol)),
        trajectory: r.iterations.iter().map(|it| it.objective_w).collect(),
    }
}

/// Runs one scheme on one trial of one sweep point.
pub fn run_trial(
    figure: FigureId,
    base: &ScenarioConfig,
    seed: u64,
    sweep_index: usize,
    sweep_value: f64,
    trial: usize,
    scheme: SchemeId,
) -> Row {
    let cfg = figure.configure(base, sweep_value);
    let ch = draw_channels(&cfg, child_seed(seed, &[trial as u64]));
    let mut opts = scheme.run_options();
    opts.seed = child_seed(seed, &[trial as u64, sweep_index as u64 + 1]);
    row_from_report(sweep_value, trial, scheme, &run_pipeline(&ch, &cfg, &opts), cfg.tolerance)
}

fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| {
        a.sweep_value.total_cmp(&b.sweep_value).then(a.trial.cmp(&b.trial)).then(a.scheme.cmp(&b.scheme))
    });
}

/// Every `(sweep point, trial, scheme)` run, in the canonical row order.
pub fn collect_rows(spec: &ExperimentSpec, cfg: &ScenarioConfig) -> Result<Vec<Row>, ExperimentError> {
    collect_rows_with(spec, cfg, SchemeId::run_options)
}

pub fn raw_csv(rows: &[Row]) -> String {
    let mut out = String::from(RAW_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            sci(r.sweep_value),
            r.trial,
            r.scheme,
            sci(r.power_w),
            r.iterations,
            sci(r.max_rank_gap),
            r.status
        ));
    }
    out
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub sweep_value: f64,
    pub scheme: SchemeId,
    pub trials: usize,
    pub succeeded: usize,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q25: f64,
    pub q75: f64,
    pub q90: f64,
}

/// Statistics of the successful powers per `(sweep_value, scheme)`.
pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    let mut keys: Vec<(f64, SchemeId)> = rows.iter().map(|r| (r.sweep_value, r.scheme)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(v, s)| {
            let group: Vec<&Row> = rows.iter().filter(|r| r.sweep_value == v && r.scheme == s).collect();
            let mut p: Vec<f64> = group.iter().filter(|r| r.succeeded()).map(|r| r.power_w).collect();
            p.sort_by(f64::total_cmp);
            let mean = if p.is_empty() { f64::NAN } else { p.iter().sum::<f64>() / p.len() as f64 };
            Aggregate {
                sweep_value: v,
                scheme: s,
                trials: group.len(),
                succeeded: p.len(),
                mean,
                median: quantile(&p, 0.5),
                q10: quantile(&p, 0.1),
                q25: quantile(&p, 0.25),
                q75: quantile(&p, 0.75),
                q90: quantile(&p, 0.9),
            }
        })
        .collect()
}

pub fn aggregate_csv(aggs: &[Aggregate]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for a in aggs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            sci(a.sweep_value),
            a.scheme,
            a.trials,
            a.succeeded,
            sci(a.mean),
            sci(a.median),
            sci(a.q10),
            sci(a.q25),
            sci(a.q75),
            sci(a.q90)
        ));
    }
    out
}

pub fn trajectory_csv(rows: &[Row]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        for (n, p) in r.trajectory.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", r.trial, r.scheme, n + 1, sci(*p)));
        }
    }
    out
}

/// Rank-one counts per `K_s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusRow {
    pub k_s: usize,
    pub trials: usize,
    pub alg1_rank_one: usize,
    pub alg2_rank_one: usize,
}

pub fn census_from_rows(rows: &[Row]) -> Vec<CensusRow> {
    let mut values: Vec<f64> = rows.iter().map(|r| r.sweep_value).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
        .into_iter()
        .map(|v| {
            let count = |s: SchemeId| rows.iter().filter(|r| r.sweep_value == v && r.scheme == s && r.rank_one).count();
            let trials = rows.iter().filter(|r| r.sweep_value == v).map(|r| r.trial).max().map_or(0, |t| t + 1);
            CensusRow {
                k_s: v.round() as usize,
                trials,
                alg1_rank_one: count(SchemeId::Alg1),
                alg2_rank_one: count(SchemeId::Alg2),
            }
        })
        .collect()
}

pub fn census_csv(rows: &[CensusRow]) -> String {
    let mut out = String::from(CENSUS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.k_s, r.trials, r.alg1_rank_one, r.alg2_rank_one));
    }
    out
}

/// Table IV analog: Algorithm 1 (before randomization) against Algorithm 2,
/// per `K_s ∈ {1, 2, 3}`.
pub fn rank_one_census(cfg: &ScenarioConfig, trials: usize, seed: u64) -> Result<Vec<CensusRow>, ExperimentError> {
    let mut spec = ExperimentSpec::new(FigureId::Table4, trials, seed, PathBuf::new());
    spec.plots = false;
    let rows = collect_rows_with(&spec, cfg, |s| {
        let mut o = s.run_options();
        // Only the relaxed solution matters for the census.
        o.randomization_samples = None;
        o
    })?;
    Ok(census_from_rows(&rows))
}

fn collect_rows_with(
    spec: &ExperimentSpec,
    cfg: &ScenarioConfig,
    options: impl Fn(SchemeId) -> RunOptions + Sync,
) -> Result<Vec<Row>, ExperimentError> {
    spec.validate()?;
    for &v in &spec.sweep {
        let c = spec.figure.configure(cfg, v);
        if let Some(first) = c.validate().first() {
            return Err(ExperimentError::Config(format!("sweep value {v}: {}", first.message)));
        }
    }
    let mut schemes = spec.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let mut tasks = Vec::new();
    for (k, &v) in spec.sweep.iter().enumerate() {
        for t in 0..spec.trials {
            for &s in &schemes {
                tasks.push((k, v, t, s));
            }
        }
    }
    let run = || -> Vec<Row> {
        tasks
            .par_iter()
            .map(|&(k, v, t, s)| {
                let c = spec.figure.configure(cfg, v);
                let ch = draw_channels(&c, child_seed(spec.seed, &[t as u64]));
                let mut o = options(s);
                o.seed = child_seed(spec.seed, &[t as u64, k as u64 + 1]);
                row_from_report(v, t, s, &run_pipeline(&ch, &c, &o), c.tolerance)
            })
            .collect()
    };
    let mut rows = if spec.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| ExperimentError::Spec(format!("thread pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    };
    sort_rows(&mut rows);
    Ok(rows)
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub raw: PathBuf,
    pub aggregate: PathBuf,
    pub extra: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<PathBuf, ExperimentError> {
    fs::write(path, contents)?;
    Ok(path.to_path_buf())
}

/// Runs the spec and writes `<figure>_raw.csv`, `<figure>_aggregate.csv`,
/// any figure-specific table, and SVG plots unless disabled.
pub fn run_experiment(spec: &ExperimentSpec, cfg: &ScenarioConfig) -> Result<Artifacts, ExperimentError> {
    let rows = collect_rows(spec, cfg)?;
    fs::create_dir_all(&spec.out_dir)?;
    let id = spec.figure.as_str();
    let dir = &spec.out_dir;
    let aggs = aggregate(&rows);
    let raw = write(&dir.join(format!("{id}_raw.csv")), &raw_csv(&rows))?;
    let aggregate = write(&dir.join(format!("{id}_aggregate.csv")), &aggregate_csv(&aggs))?;
    let mut extra = Vec::new();
    match spec.figure {
        FigureId::Fig4 => extra.push(write(&dir.join(format!("{id}_trajectory.csv")), &trajectory_csv(&rows))?),
        FigureId::Table4 => extra.push(write(&dir.join(format!("{id}_census.csv")), &census_csv(&census_from_rows(&rows)))?),
        _ => {}
    }
    let mut plots = Vec::new();
    if spec.plots {
        let path = dir.join(format!("{id}.svg"));
        let svg = match spec.figure {
            FigureId::Fig4 => plot::trajectory(&rows)?,
            FigureId::Fig5 => plot::cdf(&rows)?,
            _ => plot::sweep(&aggs, spec.figure.sweep_label())?,
        };
        plots.push(write(&path, &svg)?);
    }
    Ok(Artifacts { raw, aggregate, extra, plots })
}

/// Mean power in dBm, skipping failed runs.
fn mean_dbm(values: &[f64]) -> Option<f64> {
    let ok: Vec<f64> = values.iter().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
    (!ok.is_empty()).then(|| watts_to_dbm(ok.iter().sum::<f64>() / ok.len() as f64))
}

mod plot {
    //! SVG line charts; the CSV files are the contract, these are a convenience.

    use plotters::prelude::*;

    use super::{mean_dbm, Aggregate, ExperimentError, Row, SchemeId};
    use crate::scenario::watts_to_dbm;

    type Series = (String, Vec<(f64, f64)>);

    fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
        if !lo.is_finite() || !hi.is_finite() {
            return 0.0..1.0;
        }
        let pad = if hi - lo < 1e-12 { 0.5 } else { 0.05 * (hi - lo) };
        lo - pad..hi + pad
    }

    fn chart(series: &[Series], xlabel: &str, ylabel: &str) -> Result<String, ExperimentError> {
        let err = |e: String| ExperimentError::Plot(e);
        let pts = || series.iter().flat_map(|s| s.1.iter());
        let (x0, x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (y0, y1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        let mut svg = String::new();
        {
            let root = SVGBackend::with_string(&mut svg, (640, 420)).into_drawing_area();
            root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
            let mut c = ChartBuilder::on(&root)
                .margin(12)
                .x_label_area_size(40)
                .y_label_area_size(60)
                .build_cartesian_2d(padded(x0, x1), padded(y0, y1))
                .map_err(|e| err(e.to_string()))?;
            c.configure_mesh().x_desc(xlabel).y_desc(ylabel).draw().map_err(|e| err(e.to_string()))?;
            for (k, (name, points)) in series.iter().enumerate() {
                let color = Palette99::pick(k).to_rgba();
                c.draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
                    .map_err(|e| err(e.to_string()))?
                    .label(name.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
                c.draw_series(points.iter().map(|&p| Circle::new(p, 3, color.filled())))
                    .map_err(|e| err(e.to_string()))?;
            }
            c.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(|e| err(e.to_string()))?;
            root.present().map_err(|e| err(e.to_string()))?;
        }
        Ok(svg)
    }

    fn schemes_of<'a>(it: impl Iterator<Item = &'a SchemeId>) -> Vec<SchemeId> {
        let mut s: Vec<SchemeId> = it.copied().collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn sweep(aggs: &[Aggregate], xlabel: &str) -> Result<String, ExperimentError> {
        let series: Vec<Series> = schemes_of(aggs.iter().map(|a| &a.scheme))
            .into_iter()
            .map(|s| {
                let pts = aggs
                    .iter()
                    .filter(|a| a.scheme == s && a.mean.is_finite() && a.mean > 0.0)
                    .map(|a| (a.sweep_value, watts_to_dbm(a.mean)))
                    .collect();
                (s.to_string(), pts)
            })
            .collect();
        chart(&series, xlabel, "mean transmit power (dBm)")
    }

    pub fn trajectory(rows: &[Row]) -> Result<String, ExperimentError> {
        let series: Vec<Series> = schemes_of(rows.iter().map(|r| &r.scheme))
            .into_iter()
            .map(|s| {
                let runs: Vec<&Row> = rows.iter().filter(|r| r.scheme == s).collect();
                let len = runs.iter().map(|r| r.trajectory.len()).max().unwrap_or(0);
                let pts = (0..len)
                    .filter_map(|n| {
                        let vals: Vec<f64> = runs.iter().filter_map(|r| r.trajectory.get(n).copied()).collect();
                        mean_dbm(&vals).map(|p| ((n + 1) as f64, p))
                    })
                    .collect();
                (s.to_string(), pts)
            })
            .collect();
        chart(&series, "iteration", "mean transmit power (dBm)")
    }

    pub fn cdf(rows: &[Row]) -> Result<String, ExperimentError> {
        let series: Vec<Series> = schemes_of(rows.iter().map(|r| &r.scheme))
            .into_iter()
            .map(|s| {
                let mut p: Vec<f64> =
                    rows.iter().filter(|r| r.scheme == s && r.succeeded()).map(|r| watts_to_dbm(r.power_w)).collect();
                p.sort_by(f64::total_cmp);
                let n = p.len() as f64;
                (s.to_string(), p.iter().enumerate().map(|(k, &x)| (x, (k + 1) as f64 / n)).collect())
            })
            .collect();
        chart(&series, "transmit power (dBm)", "empirical CDF")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: f64, t: usize, s: SchemeId, p: f64) -> Row {
        Row {
            sweep_value: v,
            trial: t,
            scheme: s,
            power_w: p,
            iterations: 3,
            max_rank_gap: 0.0,
            status: "converged".into(),
            rank_one: true,
            trajectory: vec![p],
        }
    }

    #[test]
    fn sci_has_ten_significant_digits() {
        assert_eq!(sci(7.2406531509e-4), "7.240653151e-4");
        assert_eq!(sci(0.0), "0.000000000e0");
        assert_eq!(sci(f64::NAN), "NaN");
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn rows_sort_by_value_trial_scheme() {
        let mut rows = vec![
            row(2.0, 0, SchemeId::Alg1, 1.0),
            row(1.0, 1, SchemeId::Alg2, 1.0),
            row(1.0, 1, SchemeId::Alg1, 1.0),
            row(1.0, 0, SchemeId::Tdma, 1.0),
        ];
        sort_rows(&mut rows);
        let keys: Vec<(f64, usize, SchemeId)> = rows.iter().map(|r| (r.sweep_value, r.trial, r.scheme)).collect();
        assert_eq!(
            keys,
            vec![(1.0, 0, SchemeId::Tdma), (1.0, 1, SchemeId::Alg1), (1.0, 1, SchemeId::Alg2), (2.0, 0, SchemeId::Alg1)]
        );
    }

    #[test]
    fn aggregate_ignores_failed_runs() {
        let mut bad = row(1.0, 2, SchemeId::Alg2, f64::NAN);
        bad.status = "solver_failure".into();
        let rows = vec![row(1.0, 0, SchemeId::Alg2, 1.0), row(1.0, 1, SchemeId::Alg2, 3.0), bad];
        let a = &aggregate(&rows)[0];
        assert_eq!((a.trials, a.succeeded), (3, 2));
        assert_eq!(a.mean, 2.0);
        assert_eq!(a.median, 2.0);
    }

    #[test]
    fn census_counts_partition_trials() {
        let mut rows = vec![row(1.0, 0, SchemeId::Alg1, 1.0), row(1.0, 0, SchemeId::Alg2, 1.0), row(1.0, 1, SchemeId::Alg2, 1.0)];
        rows[0].rank_one = false;
        let c = census_from_rows(&rows);
        assert_eq!(c, vec![CensusRow { k_s: 1, trials: 2, alg1_rank_one: 0, alg2_rank_one: 2 }]);
    }

    #[test]
    fn ids_round_trip() {
        for f in FigureId::ALL {
            assert_eq!(f.as_str().parse::<FigureId>().unwrap(), f);
        }
        for s in SchemeId::ALL {
            assert_eq!(s.as_str().parse::<SchemeId>().unwrap(), s);
        }
        assert!("fig9".parse::<FigureId>().is_err());
    }

    #[test]
    fn empty_spec_is_rejected() {
        let mut spec = ExperimentSpec::new(FigureId::Fig2, 1, 0, "/tmp/unused");
        spec.trials = 0;
        assert!(spec.validate().is_err());
        spec.trials = 1;
        spec.sweep.clear();
        assert!(spec.validate().is_err());
    }
}
