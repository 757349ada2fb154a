//! Command-line front end: load step-response demos, candidate enumeration
//! reports, full receding-horizon runs, and synthetic forecast generation.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad config or
//! loads file, invalid flags for the config at hand), 1 for runtime failures
//! (I/O while writing outputs, simulation errors).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use loadsched::config::{load_loads_file, RunConfig};
use loadsched::forecast::{gen_solar_curve, write_forecast_csv, ForecastSeries};
use loadsched::loadmodel::DiscreteLoadModel;
use loadsched::scheduler::receding_horizon_run;
use loadsched::switchset::{
    cardinality_bound, CombinationSet, HorizonConfig, LoadSwitchState,
};
use loadsched::trace::{write_run_outputs, RunSummary};

#[derive(Parser)]
#[command(
    name = "loadsched",
    version,
    about = "Schedules on/off switching of dynamic loads against a power forecast"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate each load's switch-on/switch-off step response and write
    /// demo_loads.csv
    DemoLoads {
        /// Loads file (JSON array of load descriptions)
        #[arg(long)]
        loads: PathBuf,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// How long to hold the load on, then off again, in seconds
        #[arg(long, default_value_t = 900.0)]
        hold_s: f64,
        /// Simulation time step in seconds
        #[arg(long, default_value_t = 1.0)]
        dt_s: f64,
    },
    /// Count admissible switching candidates for a config and check the
    /// cardinality bound
    Enumerate {
        /// Run configuration (JSON)
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full receding-horizon simulation and write trace.csv,
    /// steps.csv, and summary.json
    Run {
        /// Run configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for candidate evaluation (overrides the config)
        #[arg(long)]
        workers: Option<usize>,
        /// Forecast seed (overrides the config; synthetic forecasts only)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the config's synthetic forecast as a CSV
    GenForecast {
        /// Run configuration (JSON) with a synthetic forecast block
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Forecast seed (overrides the config)
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// An error carrying the process exit code it should produce.
struct Failure {
    code: i32,
    err: anyhow::Error,
}

type CliResult = Result<(), Failure>;

const CONFIG_EXIT: i32 = 2;
const RUNTIME_EXIT: i32 = 1;

fn config_err<E: Into<anyhow::Error>>(err: E) -> Failure {
    Failure {
        code: CONFIG_EXIT,
        err: err.into(),
    }
}

fn runtime_err<E: Into<anyhow::Error>>(err: E) -> Failure {
    Failure {
        code: RUNTIME_EXIT,
        err: err.into(),
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::DemoLoads {
            loads,
            out,
            hold_s,
            dt_s,
        } => demo_loads(&loads, &out, hold_s, dt_s),
        Cmd::Enumerate { config } => enumerate(&config),
        Cmd::Run {
            config,
            out,
            workers,
            seed,
        } => run(&config, out, workers, seed),
        Cmd::GenForecast { config, out, seed } => gen_forecast(&config, out, seed),
    };
    if let Err(f) = result {
        eprintln!("error: {:#}", f.err);
        std::process::exit(f.code);
    }
}

fn base_dir(config_path: &Path) -> PathBuf {
    match config_path.parent() {
        Some(p) if p != Path::new("") => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_out_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(runtime_err)
}

fn demo_loads(loads_path: &Path, out: &Path, hold_s: f64, dt_s: f64) -> CliResult {
    if !(hold_s > 0.0) || !(dt_s > 0.0) {
        return Err(config_err(anyhow!(
            "--hold-s and --dt-s must be positive, got {hold_s} and {dt_s}"
        )));
    }
    let started = Instant::now();
    let specs = load_loads_file(loads_path).map_err(config_err)?;
    let models: Vec<DiscreteLoadModel<f64>> = specs
        .iter()
        .map(|s| DiscreteLoadModel::new(s.clone(), dt_s))
        .collect::<Result<_, _>>()
        .map_err(config_err)?;

    // Every load runs the same experiment: off at rest, switched on at t=0,
    // held for hold_s, switched off, held again.
    let hold_steps = (hold_s / dt_s).round() as usize;
    let w: Vec<bool> = std::iter::repeat(true)
        .take(hold_steps)
        .chain(std::iter::repeat(false).take(hold_steps))
        .collect();
    let responses: Vec<Vec<f64>> = models
        .iter()
        .map(|m| {
            let mut state = m.initial_state();
            m.simulate_switched(&mut state, &w)
        })
        .collect();

    let mut csv = String::from("time_s");
    for s in &specs {
        write!(csv, ",p_{}", s.id).expect("string write");
    }
    csv.push('\n');
    for m in 0..=2 * hold_steps {
        write!(csv, "{}", m as f64 * dt_s).expect("string write");
        for r in &responses {
            let p = if m == 0 { 0.0 } else { r[m - 1] };
            write!(csv, ",{p}").expect("string write");
        }
        csv.push('\n');
    }
    create_out_dir(out)?;
    let path = out.join("demo_loads.csv");
    std::fs::write(&path, csv)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(runtime_err)?;

    for (s, r) in specs.iter().zip(&responses) {
        let on_phase = &r[..hold_steps];
        let peak = on_phase.iter().copied().fold(f64::MIN, f64::max);
        let settled = on_phase.last().copied().unwrap_or(0.0);
        let overshoot_pct = 100.0 * (peak - s.size_pu) / s.size_pu;
        println!(
            "load {}: size {:.4} PU, settled at {:.4} PU after {hold_s} s, overshoot {:.1}%",
            s.id,
            s.size_pu,
            settled,
            overshoot_pct.max(0.0)
        );
    }
    println!(
        "wrote {} ({} loads, {:.3} s)",
        path.display(),
        specs.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn enumerate(config_path: &Path) -> CliResult {
    let cfg = RunConfig::load(config_path).map_err(config_err)?;
    let horizon = HorizonConfig::new(
        cfg.horizon.n_steps,
        cfg.horizon.ctrl_interval_s,
        cfg.horizon.fine_dt_s,
    )
    .map_err(|e| config_err(anyhow!("horizon: {e}")))?;
    let specs = load_loads_file(&base_dir(config_path).join(&cfg.loads_path)).map_err(config_err)?;
    let states: Vec<LoadSwitchState> = specs
        .iter()
        .map(|s| LoadSwitchState::initial(s, &horizon))
        .collect::<Result<_, _>>()
        .map_err(|e| config_err(anyhow!("{e}")))?;

    let set = CombinationSet::enumerate(&states, horizon.n_steps());
    let total = set.len();
    let bound = cardinality_bound(specs.len() as u32, horizon.n_steps() as u32);
    let bound_value = match bound {
        Some(b) if b <= u128::from(u64::MAX) => serde_json::json!(b as u64),
        _ => serde_json::json!("overflow"),
    };
    let report = serde_json::json!({
        "n_steps": horizon.n_steps(),
        "loads": specs
            .iter()
            .zip(set.counts())
            .map(|(s, c)| serde_json::json!({ "id": s.id, "trajectories": c }))
            .collect::<Vec<_>>(),
        "total_candidates": total,
        "bound": bound_value,
        "within_bound": bound.map(|b| (total as u128) < b),
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn run(
    config_path: &Path,
    out: Option<PathBuf>,
    workers: Option<usize>,
    seed: Option<u64>,
) -> CliResult {
    let mut cfg = RunConfig::load(config_path).map_err(config_err)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    if let Some(seed) = seed {
        match cfg.forecast.synthetic.as_mut() {
            Some(block) => block.seed = seed,
            None => {
                return Err(config_err(anyhow!(
                    "--seed only applies to a synthetic forecast; this config reads a CSV"
                )))
            }
        }
    }
    let setup = cfg.build(&base_dir(config_path)).map_err(config_err)?;

    let started = Instant::now();
    let solution = receding_horizon_run(
        &setup.models,
        &setup.horizon,
        &setup.battery,
        setup.soc_init,
        &setup.forecast,
        setup.workers,
    )
    .map_err(runtime_err)?;
    let elapsed = started.elapsed().as_secs_f64();

    let summary = RunSummary::compute(&solution.trace, &solution.steps, setup.battery.p_norm);
    let files = write_run_outputs(&solution.trace, &solution.steps, &summary, &setup.output_dir)
        .map_err(runtime_err)?;

    println!(
        "{} control steps, {} fine rows, {} workers, {elapsed:.2} s",
        summary.control_steps, summary.fine_rows, setup.workers
    );
    println!(
        "soc range [{:.4}, {:.4}], max |e| {:.4} PU (normalized power {:.3}, limit {})",
        summary.min_soc,
        summary.max_soc,
        summary.max_abs_e_pu,
        summary.max_norm_power,
        if summary.power_within_limit { "kept" } else { "EXCEEDED" }
    );
    println!(
        "wrote {}, {}, {}",
        files.trace_csv.display(),
        files.steps_csv.display(),
        files.summary_json.display()
    );
    if summary.timing.median_step_s > 0.3 {
        eprintln!(
            "warning: median optimization step took {:.3} s (budget 0.3 s)",
            summary.timing.median_step_s
        );
    }
    if summary.timing.total_wall_s > 70.0 {
        eprintln!(
            "warning: optimization totalled {:.1} s (budget 70 s)",
            summary.timing.total_wall_s
        );
    }
    Ok(())
}

fn gen_forecast(config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> CliResult {
    let cfg = RunConfig::load(config_path).map_err(config_err)?;
    let Some(syn) = cfg.forecast.synthetic else {
        return Err(config_err(anyhow!(
            "gen-forecast needs a `synthetic` forecast block in the config"
        )));
    };
    let series: ForecastSeries<f64> = gen_solar_curve(
        syn.duration_s,
        syn.peak_pu,
        seed.unwrap_or(syn.seed),
        syn.noise_level,
        cfg.horizon.fine_dt_s,
    )
    .map_err(config_err)?;
    let dir = out.unwrap_or(cfg.output_dir);
    create_out_dir(&dir)?;
    let path = dir.join("forecast.csv");
    write_forecast_csv(&series, &path).map_err(runtime_err)?;
    println!(
        "wrote {} ({} samples at {} s spacing, peak {:.4} PU)",
        path.display(),
        series.len(),
        series.dt_s(),
        series.values().iter().copied().fold(0.0f64, f64::max)
    );
    Ok(())
}
