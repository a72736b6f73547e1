use clap::{Parser, Subcommand};
use fscbf::experiments::{
    gridsweep, simulate, sweep, volcheck, ExperimentError, GridSweepSpec, SweepSpec,
};
use fscbf::scenario::{load_config, ControllerKind, ScenarioConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Smallest barrier value tolerated on solved steps.
const SAFETY_TOLERANCE: f64 = -1e-3;

#[derive(Parser)]
#[command(name = "fscbf", version, about = "Feasible-space CBF experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace, summary and snapshots.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the controller named in the config.
        #[arg(long, value_parser = parse_controller)]
        controller: Option<ControllerKind>,
    },
    /// Randomized sensitivity sweep comparing controllers.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "FSCBF_JOBS")]
        jobs: Option<usize>,
    },
    /// Feasible-space volume over a grid of Dubins positions.
    Gridsweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "FSCBF_JOBS")]
        jobs: Option<usize>,
    },
    /// Cross-check the volume estimators on polytope fixtures.
    Volcheck {
        #[arg(long)]
        fixtures: PathBuf,
    },
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    match s {
        "cbf_qp" => Ok(ControllerKind::CbfQp),
        "fs_cbf_qp" => Ok(ControllerKind::FsCbfQp),
        _ => Err(format!("unknown controller {s:?}; expected cbf_qp or fs_cbf_qp")),
    }
}

enum Failure {
    Config(String),
    Violation(String),
    Other(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn parent(path: &Path) -> Option<&Path> {
    path.parent().filter(|p| !p.as_os_str().is_empty())
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    load_config(path).map_err(|e| Failure::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            controller,
        } => {
            let mut cfg: ScenarioConfig = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(c) = controller {
                cfg.controller = c;
            }
            let (_, report) = simulate(cfg, parent(&config), &out)?;
            let s = &report.summary;
            println!(
                "{} [{}]: reached_goal={} first_infeasible_time={} run_time={:.2} min_h={} runtime={:.3}s",
                s.name,
                s.controller,
                s.reached_goal,
                s.first_infeasible_time.map_or("none".into(), |t| format!("{t:.2}")),
                s.run_time,
                s.min_h.map_or("none".into(), |h| format!("{h:.4}")),
                report.runtime
            );
            if s.min_h.is_some_and(|h| h < SAFETY_TOLERANCE) {
                return Err(Failure::Violation(format!("barrier value fell to {:?}", s.min_h)));
            }
        }
        Command::Sweep { spec, out, seed, jobs } => {
            let mut sweep_spec: SweepSpec = load(&spec)?;
            if let Some(s) = seed {
                sweep_spec.seed = s;
            }
            let scenario_path = parent(&spec).map_or_else(|| sweep_spec.scenario.clone(), |d| d.join(&sweep_spec.scenario));
            let base: ScenarioConfig = load(&scenario_path)?;
            let report = sweep(&sweep_spec, &base, parent(&scenario_path), jobs)?;
            report.write(&out)?;
            for v in &report.variants {
                println!(
                    "{:<16} mean T = {} infeasible {}/{} reached goal {} failed {}",
                    v.name,
                    v.mean_run_time.map_or("n/a".into(), |t| format!("{t:.3}")),
                    v.infeasible_runs,
                    report.samples.len(),
                    v.reached_goal_runs,
                    v.failed_runs
                );
            }
            let bad = report.out_of_range_times();
            if bad > 0 {
                return Err(Failure::Violation(format!("{bad} run times outside [0, horizon]")));
            }
        }
        Command::Gridsweep { spec, out, seed, jobs } => {
            let mut grid_spec: GridSweepSpec = load(&spec)?;
            if let Some(s) = seed {
                grid_spec.seed = s;
            }
            let report = gridsweep(&grid_spec, jobs)?;
            report.write(&out)?;
            for (name, count) in &report.monotonicity_violations {
                match count {
                    Some(n) => println!("monotonicity {name}: {n} violations"),
                    None => println!("monotonicity {name}: not comparable"),
                }
            }
            println!(
                "mc range violations {}, proxy bound violations {}",
                report.mc_range_violations, report.proxy_bound_violations
            );
            if report.violations() > 0 {
                return Err(Failure::Violation(format!("{} grid invariant violations", report.violations())));
            }
        }
        Command::Volcheck { fixtures } => {
            let report = volcheck(&fixtures)?;
            for f in &report.fixtures {
                let timing: Vec<String> = f
                    .timings
                    .iter()
                    .map(|t| format!("{}={:.3}ms", t.method, t.median_seconds * 1e3))
                    .collect();
                println!(
                    "{}: mc={:.6}±{:.1e} smoothed={:.6} chebyshev_r={:.6} ellipsoid_det={:.6} grad_err=({}, {}) {} {}",
                    f.name,
                    f.mc,
                    f.mc_std_error,
                    f.smoothed_mc,
                    f.chebyshev_radius,
                    f.ellipsoid_det,
                    f.chebyshev_gradient_error.map_or("excluded".into(), |e| format!("{e:.1e}")),
                    f.ellipsoid_gradient_error.map_or("excluded".into(), |e| format!("{e:.1e}")),
                    timing.join(" "),
                    if f.violations.is_empty() { "ok".to_string() } else { f.violations.join("; ") }
                );
            }
            if report.violations() > 0 {
                return Err(Failure::Violation(format!("{} volume invariant violations", report.violations())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(m)) => {
            eprintln!("invariant violated: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
    }
}
