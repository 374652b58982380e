use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use secbf::baselines::{verify_tdma, TdmaSolution};
use secbf::experiments::{census_csv, rank_one_census, run_experiment, ExperimentSpec, FigureId, SchemeId};
use secbf::physics::{verify_solution, BeamformingSolution};
use secbf::scenario::{ChannelSet, ScenarioConfig};

#[derive(Parser)]
#[command(name = "secbf", version, about = "Secure beamforming for cognitive NOMA networks with SWIPT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep for one figure; writes CSV (and SVG) files.
    Run {
        #[arg(long)]
        figure: FigureId,
        /// Scenario JSON; the default parameter table when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Comma separated subset of alg1, alg2, robust, tdma, noma_nocoop.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<SchemeId>>,
        #[arg(long)]
        no_plots: bool,
        /// Worker threads (0: one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Rank-one counts of Algorithms 1 and 2 for K_s = 1, 2, 3.
    Census {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a stored design against stored channels.
    Verify {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, String> {
    let cfg = match path {
        None => ScenarioConfig::table_defaults(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            ScenarioConfig::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
    };
    let issues = cfg.validate();
    if !issues.is_empty() {
        let msg: Vec<String> = issues.iter().map(|v| v.message.clone()).collect();
        return Err(format!("invalid configuration: {}", msg.join("; ")));
    }
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run { figure, config, trials, seed, out, schemes, no_plots, workers } => {
            let cfg = load_config(config.as_deref())?;
            let mut spec = ExperimentSpec::new(figure, trials, seed, out);
            if let Some(s) = schemes {
                spec.schemes = s;
            }
            spec.plots = !no_plots;
            spec.workers = workers;
            let art = run_experiment(&spec, &cfg).map_err(|e| e.to_string())?;
            for p in [&art.raw, &art.aggregate].into_iter().chain(&art.extra).chain(&art.plots) {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Census { trials, seed, config } => {
            let cfg = load_config(config.as_deref())?;
            let rows = rank_one_census(&cfg, trials, seed).map_err(|e| e.to_string())?;
            print!("{}", census_csv(&rows));
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { solution, channels, config } => {
            let cfg = load_config(config.as_deref())?;
            let ch: ChannelSet = serde_json::from_str(&read(&channels)?).map_err(|e| format!("channels: {e}"))?;
            let text = read(&solution)?;
            let report = if let Ok(sol) = serde_json::from_str::<BeamformingSolution>(&text) {
                verify_solution(&sol, &ch, &cfg)
            } else {
                let sol: TdmaSolution = serde_json::from_str(&text).map_err(|e| format!("solution: {e}"))?;
                verify_tdma(&sol, &ch, &cfg)
            }
            .map_err(|e| e.to_string())?;
            println!("{}", report.to_json());
            Ok(if report.all_satisfied() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
