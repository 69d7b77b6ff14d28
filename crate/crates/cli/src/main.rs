//! `qsd`: plan, simulate, and analyze sequential state-discrimination
//! policies from the command line.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 grid size-cap
//! overflows, 4 table/config hash mismatches, 1 anything else.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{
    load_config_file, parse_grid_list, parse_prior, resolve_out_dir, ConfigFile, CounterModeArg,
    RunConfig, ScenarioKind, DEFAULT_GRID_CAP,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    SizeCap(String),
    #[error("{0}")]
    HashMismatch(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::SizeCap(_) => 3,
            CliError::HashMismatch(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "qsd",
    about = "Sequential quantum state discrimination: belief-grid planning, online simulation, error budgets, and complexity sweeps",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the offline planner and write value/policy tables with budget
    /// and counter reports.
    Plan(ScenarioArgs),
    /// Simulate episodes under previously planned tables.
    Simulate(SimulateArgs),
    /// Export one-step and horizon-two maps (trine) or value/gain curves
    /// (binary).
    Maps(ScenarioArgs),
    /// Route the outcome-conditioned posteriors from a representative or
    /// explicit starting belief (trine).
    Routing(RoutingArgs),
    /// Compute regularity constants and discretization error budgets; for
    /// binary scenarios also check them against a fine-grid reference run.
    Bounds(BoundsArgs),
    /// Sweep grid resolutions and fit the projection-cost scaling law.
    Scaling(ScalingArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario family.
    #[arg(long, value_enum)]
    scenario: ScenarioKind,
    /// Angle between the two binary states (binary scenarios).
    #[arg(long)]
    theta: Option<f64>,
    /// Custom ensemble definition file (custom scenarios).
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Number of remaining decision stages.
    #[arg(long)]
    horizon: usize,
    /// Per-measurement cost.
    #[arg(long)]
    cost: f64,
    /// Belief-grid resolution N.
    #[arg(long)]
    grid: Option<u32>,
    /// Measurement-library size.
    #[arg(long)]
    library: Option<usize>,
    /// Projection accounting mode.
    #[arg(long, value_enum, default_value = "raw")]
    counter_mode: CounterModeArg,
    /// Prior belief as comma-separated weights.
    #[arg(long)]
    prior: Option<String>,
    /// Default episode count and RNG seed recorded for later simulation.
    #[arg(long, default_value_t = 100_000)]
    episodes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on the number of grid points.
    #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
    grid_cap: usize,
    /// Output directory (relative paths resolve under QSD_OUT_ROOT).
    #[arg(long)]
    out: PathBuf,
    /// JSON file whose fields override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory holding a plan command's outputs.
    #[arg(long)]
    tables: PathBuf,
    /// Episode count; defaults to the planned configuration's value.
    #[arg(long)]
    episodes: Option<u64>,
    /// RNG seed; defaults to the planned configuration's value.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write one JSON line per episode.
    #[arg(long)]
    traces: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RoutingArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Representative starting belief, one of A-E.
    #[arg(long)]
    case: Option<char>,
    /// Explicit starting belief as comma-separated weights.
    #[arg(long)]
    start: Option<String>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Fine-grid resolution for the binary reference run.
    #[arg(long, default_value_t = 20_000)]
    oracle_grid: u32,
}

#[derive(Args)]
struct ScalingArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated grid resolutions to sweep.
    #[arg(long)]
    grids: String,
}

fn resolve_config(args: &ScenarioArgs) -> Result<RunConfig, CliError> {
    let overrides = match &args.config {
        Some(path) => load_config_file(path)?,
        None => ConfigFile::default(),
    };
    let scenario = overrides.scenario.unwrap_or(args.scenario);
    let (default_grid, default_library, default_theta) = RunConfig::scenario_defaults(scenario);
    let theta = overrides.theta.or(args.theta).or_else(|| {
        (scenario == ScenarioKind::Binary).then_some(default_theta)
    });
    let ensemble_path = overrides.ensemble.clone().or_else(|| args.ensemble.clone());
    let ensemble = match (&scenario, ensemble_path) {
        (ScenarioKind::Custom, Some(path)) => {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                CliError::Config(format!("cannot read ensemble {}: {e}", path.display()))
            })?;
            let file: qsd_core::export::EnsembleFile =
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!(
                        "ensemble {} line {}, column {}: {e}",
                        path.display(),
                        e.line(),
                        e.column()
                    ))
                })?;
            Some(file)
        }
        (ScenarioKind::Custom, None) => None,
        _ => None,
    };
    let prior = match (&overrides.prior, &args.prior) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(text)) => Some(parse_prior(text)?),
        (None, None) => None,
    };
    let config = RunConfig {
        scenario,
        theta,
        ensemble,
        horizon: overrides.horizon.unwrap_or(args.horizon),
        cost: overrides.cost.unwrap_or(args.cost),
        grid: overrides.grid.or(args.grid).unwrap_or(default_grid),
        library: overrides.library.or(args.library).unwrap_or(default_library),
        counter_mode: overrides.counter_mode.unwrap_or(args.counter_mode),
        prior,
        episodes: overrides.episodes.unwrap_or(args.episodes),
        seed: overrides.seed.unwrap_or(args.seed),
        grid_cap: overrides.grid_cap.unwrap_or(args.grid_cap),
    };
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan(args) => {
            let config = resolve_config(&args)?;
            commands::cmd_plan(&config, &resolve_out_dir(&args.out))
        }
        Command::Simulate(args) => commands::cmd_simulate(
            &args.tables,
            args.episodes,
            args.seed,
            args.traces,
            &resolve_out_dir(&args.out),
        ),
        Command::Maps(args) => {
            let config = resolve_config(&args)?;
            commands::cmd_maps(&config, &resolve_out_dir(&args.out))
        }
        Command::Routing(args) => {
            let config = resolve_config(&args.scenario)?;
            let start = args.start.as_deref().map(parse_prior).transpose()?;
            commands::cmd_routing(&config, args.case, start, &resolve_out_dir(&args.scenario.out))
        }
        Command::Bounds(args) => {
            let config = resolve_config(&args.scenario)?;
            commands::cmd_bounds(&config, args.oracle_grid, &resolve_out_dir(&args.scenario.out))
        }
        Command::Scaling(args) => {
            let config = resolve_config(&args.scenario)?;
            let grids = parse_grid_list(&args.grids)?;
            commands::cmd_scaling(&config, &grids, &resolve_out_dir(&args.scenario.out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
