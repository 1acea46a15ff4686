use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dcee_mtpa::observer::TorqueSource;
use dcee_mtpa::scenario::{
    emit_plots, export_csv, read_csv, run_scenario, run_sweep, ConfigError, Mode, ScenarioError, SweepAxis,
};
use dcee_mtpa::validation::run_suite;
use dcee_mtpa::ScenarioConfig;

const EXIT_FAILURE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "dcee-mtpa", version, about = "IPMSM MTPA simulation: i_d = 0, extremum seeking and DCEE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario config (TOML). Defaults reproduce the five-segment experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the measurement-noise generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Strategy for every segment not configured as id0.
    #[arg(long)]
    mode: Option<Mode>,
    /// Torque measurement used by the adaptive strategies.
    #[arg(long = "torque-source")]
    torque_source: Option<TorqueSource>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes log.csv, summary.json, config.toml and plots.
    Run {
        #[command(flatten)]
        common: Common,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
    },
    /// Run a parameter grid in parallel; writes run_<n>.csv and sweep.json.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid axis `key=v1,v2,...` over a dotted config key; repeatable.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
    },
    /// Check the config and run the invariant suite.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render plots from an exported CSV log.
    Plot {
        /// CSV log written by `run`.
        csv: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Config supplying the machine parameters for the MTPA curve.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, ConfigError> {
    match path {
        Some(p) => ScenarioConfig::from_path(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn resolve(common: &Common) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    if let Some(mode) = common.mode {
        cfg.timeline.override_mode(mode);
    }
    if let Some(source) = common.torque_source {
        cfg.timeline.override_torque_source(source);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn run(common: &Common, no_plots: bool) -> Result<(), (u8, anyhow::Error)> {
    let cfg = resolve(common).map_err(|e| (EXIT_CONFIG, e.into()))?;
    let io = |e: anyhow::Error| (EXIT_FAILURE, e);
    create_dir(&common.out).map_err(io)?;
    let config_path = common.out.join("config.toml");
    let text = cfg.to_toml_string().map_err(|e| (EXIT_FAILURE, e.into()))?;
    std::fs::write(&config_path, text)
        .with_context(|| format!("cannot write {}", config_path.display()))
        .map_err(io)?;

    let run = match run_scenario(&cfg) {
        Ok(run) => run,
        Err(e @ ScenarioError::Diverged { .. }) => {
            if let ScenarioError::Diverged { record, .. } = &e {
                let path = common.out.join("divergence.json");
                let body = serde_json::to_string_pretty(record).map_err(|e| (EXIT_FAILURE, e.into()))?;
                std::fs::write(&path, body).map_err(|e| (EXIT_FAILURE, e.into()))?;
                eprintln!("offending record written to {}", path.display());
            }
            return Err((EXIT_DIVERGED, e.into()));
        }
        Err(e) => return Err((e.exit_code() as u8, e.into())),
    };

    export_csv(&run.log, &common.out.join("log.csv")).map_err(|e| (EXIT_FAILURE, e.into()))?;
    let summary_path = common.out.join("summary.json");
    let body = serde_json::to_string_pretty(&run.summary).map_err(|e| (EXIT_FAILURE, e.into()))?;
    std::fs::write(&summary_path, body).map_err(|e| (EXIT_FAILURE, e.into()))?;
    if !no_plots {
        emit_plots(&run.log, &cfg.motor, &common.out).map_err(|e| (EXIT_FAILURE, e.into()))?;
    }

    println!("{} ticks, {} plant steps -> {}", run.summary.ticks, run.summary.plant_steps, common.out.display());
    println!("seg  mode  source    i_s(A)   i_d(A)   i_q(A)  P_cu(W)  psi_hat(Wb)  Lqd_hat(mH)");
    for s in &run.summary.segments {
        println!(
            "{:>3}  {:<4}  {:<8} {:>7.2}  {:>7.2}  {:>7.2}  {:>7.1}  {:>11.5}  {:>11.4}",
            s.index, s.mode, s.torque_source, s.i_s, s.i_d, s.i_q, s.p_cu, s.psi_f_hat, s.l_qd_hat * 1e3
        );
    }
    for tr in &run.summary.transients {
        println!("off-MTPA integral [{:.3}, {:.3}) s: {:.6} A·s", tr.t0, tr.t1, tr.off_mtpa_integral);
    }
    Ok(())
}

fn sweep(common: &Common, grid: &[String]) -> Result<(), (u8, anyhow::Error)> {
    let cfg = resolve(common).map_err(|e| (EXIT_CONFIG, e.into()))?;
    let axes = grid
        .iter()
        .map(|g| g.parse::<SweepAxis>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| (EXIT_CONFIG, e.into()))?;
    create_dir(&common.out).map_err(|e| (EXIT_FAILURE, e))?;
    let points = run_sweep(&cfg, &axes, Some(&common.out)).map_err(|e| (EXIT_CONFIG, e.into()))?;
    let path = common.out.join("sweep.json");
    let body = serde_json::to_string_pretty(&points).map_err(|e| (EXIT_FAILURE, e.into()))?;
    std::fs::write(&path, body).map_err(|e| (EXIT_FAILURE, e.into()))?;
    for p in &points {
        let label: Vec<String> = p.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
        match &p.error {
            None => println!("run_{:03}  {}  ok", p.index, label.join(" ")),
            Some(e) => println!("run_{:03}  {}  exit {}: {e}", p.index, label.join(" "), p.exit_code),
        }
    }
    match points.iter().map(|p| p.exit_code).max().unwrap_or(0) {
        0 => Ok(()),
        code => Err((code as u8, anyhow::anyhow!("{} of {} grid points failed", points.iter().filter(|p| p.exit_code != 0).count(), points.len()))),
    }
}

fn validate(config: Option<&Path>) -> Result<(), (u8, anyhow::Error)> {
    let cfg = load_config(config).map_err(|e| (EXIT_CONFIG, e.into()))?;
    println!("config ok");
    let checks = run_suite(&cfg);
    for c in &checks {
        println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err((EXIT_FAILURE, anyhow::anyhow!("{failed} invariant check(s) failed")))
    }
}

fn plot(csv: &Path, out: &Path, config: Option<&Path>) -> Result<(), (u8, anyhow::Error)> {
    let cfg = load_config(config).map_err(|e| (EXIT_CONFIG, e.into()))?;
    let log = read_csv(csv).map_err(|e| (EXIT_FAILURE, e.into()))?;
    let files = emit_plots(&log, &cfg.motor, out).map_err(|e| (EXIT_FAILURE, e.into()))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, no_plots } => run(common, *no_plots),
        Command::Sweep { common, grid } => sweep(common, grid),
        Command::Validate { config } => validate(config.as_deref()),
        Command::Plot { csv, out, config } => plot(csv, out, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
