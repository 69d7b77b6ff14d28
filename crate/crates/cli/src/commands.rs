//! The six commands: offline planning, online simulation, map exports,
//! posterior routing, error budgets, and complexity scaling sweeps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qsd_core::belief::{estimate_delta_b, Belief, BeliefError, BeliefGrid, DeltaB};
use qsd_core::bounds::{
    candidate_scan_slope, complexity_report, covering_radius, probe_action_lipschitz,
    regularity_constants, total_budget, ActionLipschitz, ErrorBudget, RegularityConstants,
};
use qsd_core::cases::binary::{self, BinaryScenario};
use qsd_core::cases::trine::{self, TrineScenario};
use qsd_core::exec::Parallelism;
use qsd_core::executor::{monte_carlo, MonteCarloSummary};
use qsd_core::export;
use qsd_core::planner::{fine_grid_oracle_1d, plan_with, PlanOutput, PlannerConfig};
use qsd_core::quantum::{
    build_likelihood_table, DensityOperator, LikelihoodTable, MeasurementLibrary, ParamFamily,
};

use crate::config::{RunConfig, ScenarioKind};
use crate::manifest::{read_manifest, sha256_hex, ArtifactSet};
use crate::CliError;

/// Everything a command needs from the scenario description.
pub struct Resolved {
    pub states: Vec<DensityOperator>,
    pub library: MeasurementLibrary,
    pub table: LikelihoodTable,
    pub prior: Belief,
    pub family: ParamFamily,
    pub params: Vec<f64>,
}

pub fn resolve_scenario(config: &RunConfig) -> Result<Resolved, CliError> {
    config.validate()?;
    match config.scenario {
        ScenarioKind::Binary => {
            let theta = config.theta.expect("validated");
            let scenario = BinaryScenario::new(theta, config.cost, config.horizon, config.library)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let library = scenario.library().map_err(|e| CliError::Config(e.to_string()))?;
            let table =
                scenario.likelihood_table().map_err(|e| CliError::Config(e.to_string()))?;
            let prior = match &config.prior {
                Some(weights) => Belief::new(weights.clone())
                    .map_err(|e| CliError::Config(format!("--prior: {e}")))?,
                None => Belief::binary(0.5),
            };
            Ok(Resolved {
                states: scenario.states(),
                params: scenario.phi_grid.clone(),
                library,
                table,
                prior,
                family: ParamFamily::BinaryProjective,
            })
        }
        ScenarioKind::Trine => {
            let scenario =
                TrineScenario::new(config.library, config.grid, config.cost, config.horizon)
                    .map_err(|e| CliError::Config(e.to_string()))?;
            let library = scenario.library().map_err(|e| CliError::Config(e.to_string()))?;
            let table = scenario.likelihood_table();
            let prior = match &config.prior {
                Some(weights) => Belief::new(weights.clone())
                    .map_err(|e| CliError::Config(format!("--prior: {e}")))?,
                None => Belief::uniform(3),
            };
            Ok(Resolved {
                states: TrineScenario::states(),
                params: scenario.alphas(),
                library,
                table,
                prior,
                family: ParamFamily::TrineOrientation,
            })
        }
        ScenarioKind::Custom => {
            let file = config.ensemble.as_ref().expect("validated");
            let text = serde_json::to_string(file).expect("ensemble serializes");
            let ensemble =
                export::parse_ensemble(&text).map_err(|e| CliError::Config(e.to_string()))?;
            let table = build_likelihood_table(&ensemble.states, &ensemble.library)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let prior = match &config.prior {
                Some(weights) => Belief::new(weights.clone())
                    .map_err(|e| CliError::Config(format!("--prior: {e}")))?,
                None => ensemble.prior.clone(),
            };
            Ok(Resolved {
                states: ensemble.states,
                params: ensemble.params,
                library: ensemble.library,
                table,
                prior,
                family: ensemble.family,
            })
        }
    }
}

pub fn build_grid(config: &RunConfig, dim: usize) -> Result<BeliefGrid, CliError> {
    BeliefGrid::build(config.grid, dim, config.grid_cap).map_err(|e| match e {
        BeliefError::SizeOverflow { .. } => CliError::SizeCap(e.to_string()),
        other => CliError::Config(other.to_string()),
    })
}

/// Constants, radii, and per-stage budgets with their provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetReport {
    pub constants: RegularityConstants,
    pub delta_a: f64,
    pub delta_b: DeltaB,
    /// Budget from each starting stage `0..=horizon`.
    pub budgets: Vec<ErrorBudget>,
    /// Binary scenarios only: measured error against the fine-grid run.
    pub empirical: Option<EmpiricalCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalCheck {
    pub oracle_resolution: u32,
    /// Max grid error per stage against the fine-grid reference.
    pub max_error: Vec<f64>,
    pub within_budget: bool,
}

fn budget_report(
    config: &RunConfig,
    resolved: &Resolved,
    grid: &BeliefGrid,
) -> Result<BudgetReport, CliError> {
    let probed = probe_action_lipschitz(
        |p| resolved.family.povm(p),
        &resolved.states,
        &resolved.params,
        10,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let l_ell =
        ActionLipschitz { probed, analytic: Some(resolved.family.analytic_action_lipschitz()) };
    let constants =
        regularity_constants(&resolved.table, grid.points(), config.horizon, l_ell, config.seed)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    let delta_a = covering_radius(&resolved.params, resolved.family.period())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let delta_b = estimate_delta_b(grid, 20_000, config.seed);
    let budgets = (0..=config.horizon)
        .map(|t| total_budget(&constants, delta_a, delta_b.value(), t))
        .collect();
    Ok(BudgetReport { constants, delta_a, delta_b, budgets, empirical: None })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StoredRunConfig {
    pub config: RunConfig,
    pub config_hash: String,
}

pub fn cmd_plan(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let resolved = resolve_scenario(config)?;
    let grid = build_grid(config, resolved.table.hypotheses())?;
    let cfg = PlannerConfig {
        horizon: config.horizon,
        c_meas: config.cost,
        grid: &grid,
        library: &resolved.library,
        table: &resolved.table,
        prior: resolved.prior.clone(),
    };
    let output = plan_with(&cfg, config.counter_mode.into(), Parallelism::default())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let report = complexity_report(&output, &grid, &resolved.table)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let budget = budget_report(config, &resolved, &grid)?;

    let hash = config.content_hash();
    let mut set = ArtifactSet::create(out, "plan", hash.clone(), Some(config.seed))?;
    set.write_json("run_config.json", &StoredRunConfig { config: config.clone(), config_hash: hash })?;

    let mut grid_csv = Vec::new();
    export::write_grid_csv(&mut grid_csv, &grid)?;
    set.write("grid.csv", &grid_csv)?;

    let mut values_csv = Vec::new();
    export::write_values_csv(&mut values_csv, &output)?;
    set.write("values.csv", &values_csv)?;

    let mut values_bin = Vec::new();
    export::write_values_bin(&mut values_bin, &output.values, resolved.table.hypotheses())?;
    set.write("values.bin", &values_bin)?;

    set.write_json("tables.json", &output)?;
    set.write_json("budget.json", &budget)?;
    set.write_json("counters.json", &report)?;
    set.finish()?;

    println!(
        "planned {} grid points, {} actions, horizon {}; measure fraction at stage 0: {:.4}",
        grid.len(),
        resolved.table.actions(),
        config.horizon,
        output.policy.measure_fraction(0)
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulationEnvelope<'a> {
    seed: u64,
    episodes: u64,
    config_hash: &'a str,
    summary: &'a MonteCarloSummary,
}

pub fn cmd_simulate(
    tables_dir: &Path,
    episodes: Option<u64>,
    seed: Option<u64>,
    traces: bool,
    out: &Path,
) -> Result<(), CliError> {
    let stored: StoredRunConfig = read_json(&tables_dir.join("run_config.json"))?;
    if stored.config.content_hash() != stored.config_hash {
        return Err(CliError::HashMismatch(
            "run_config.json does not match its recorded hash".into(),
        ));
    }
    let manifest = read_manifest(tables_dir)
        .map_err(|e| CliError::Config(format!("cannot read plan manifest: {e}")))?;
    let tables_bytes = std::fs::read(tables_dir.join("tables.json"))
        .map_err(|e| CliError::Config(format!("cannot read tables.json: {e}")))?;
    let recorded = manifest
        .artifacts
        .iter()
        .find(|a| a.path == "tables.json")
        .ok_or_else(|| CliError::HashMismatch("manifest lists no tables.json".into()))?;
    if sha256_hex(&tables_bytes) != recorded.sha256 {
        return Err(CliError::HashMismatch(
            "tables.json does not match the hash recorded at planning time".into(),
        ));
    }
    if manifest.config_hash != stored.config_hash {
        return Err(CliError::HashMismatch(
            "plan manifest and run_config.json disagree on the configuration".into(),
        ));
    }
    let output: PlanOutput = serde_json::from_slice(&tables_bytes)
        .map_err(|e| CliError::Config(format!("tables.json: {e}")))?;

    let config = &stored.config;
    let resolved = resolve_scenario(config)?;
    let grid = build_grid(config, resolved.table.hypotheses())?;
    if output.policy.row(config.horizon).len() != grid.len() {
        return Err(CliError::HashMismatch(
            "tables do not match the configured grid size".into(),
        ));
    }
    let cfg = PlannerConfig {
        horizon: config.horizon,
        c_meas: config.cost,
        grid: &grid,
        library: &resolved.library,
        table: &resolved.table,
        prior: resolved.prior.clone(),
    };
    let episodes = episodes.unwrap_or(config.episodes);
    let seed = seed.unwrap_or(config.seed);
    let (summary, trace_list) =
        monte_carlo(&cfg, &output, episodes, seed, traces, Parallelism::default());

    let mut set = ArtifactSet::create(out, "simulate", stored.config_hash.clone(), Some(seed))?;
    set.write_json(
        "summary.json",
        &SimulationEnvelope { seed, episodes, config_hash: &stored.config_hash, summary: &summary },
    )?;
    if let Some(traces) = trace_list {
        let mut lines = String::new();
        for trace in &traces {
            lines.push_str(&serde_json::to_string(trace).expect("trace serializes"));
            lines.push('\n');
        }
        set.write("traces.jsonl", lines.as_bytes())?;
    }
    set.finish()?;

    println!(
        "simulated {episodes} episodes: success rate {:.6} +- {:.6}, mean stopping time {:.4}",
        summary.success_rate, summary.success_stderr, summary.mean_stop_time
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrineMapsSummary {
    measure_fraction: Vec<f64>,
    grid_points: usize,
    orientations: usize,
}

#[derive(Debug, Serialize)]
struct BinaryMapsSummary {
    measure_region: Vec<(f64, f64)>,
    max_gain: f64,
}

pub fn cmd_maps(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let resolved = resolve_scenario(config)?;
    let hash = config.content_hash();
    let mut set = ArtifactSet::create(out, "maps", hash, Some(config.seed))?;
    match config.scenario {
        ScenarioKind::Trine => {
            let grid = build_grid(config, 3)?;
            let maps = trine::one_step_maps(
                &grid,
                &resolved.table,
                &resolved.params,
                Parallelism::default(),
            );
            let mut csv = Vec::new();
            export::write_trine_maps_csv(&mut csv, &maps)?;
            set.write("trine_onestep.csv", &csv)?;

            let mut grid_csv = Vec::new();
            export::write_grid_csv(&mut grid_csv, &grid)?;
            set.write("grid.csv", &grid_csv)?;

            if config.horizon == 2 {
                let scenario =
                    TrineScenario::new(config.library, config.grid, config.cost, 2).unwrap();
                let h2 = trine::finite_horizon(
                    &scenario,
                    &grid,
                    &resolved.library,
                    &resolved.table,
                    config.counter_mode.into(),
                    Parallelism::default(),
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?;
                let mut csv = Vec::new();
                export::write_trine_h2_csv(&mut csv, &grid, &h2)?;
                set.write("trine_h2.csv", &csv)?;
                set.write_json(
                    "maps_summary.json",
                    &TrineMapsSummary {
                        measure_fraction: h2.measure_fraction.clone(),
                        grid_points: grid.len(),
                        orientations: config.library,
                    },
                )?;
            }
        }
        ScenarioKind::Binary => {
            let theta = config.theta.expect("validated");
            let p_grid = binary::default_p_grid();
            let curve = binary::gain_curve(theta, &p_grid, &resolved.params, config.cost);
            let curves = binary::bellman_h2(
                theta,
                config.cost,
                &resolved.params,
                &p_grid,
                Parallelism::default(),
            );
            let stop: Vec<f64> = p_grid.iter().map(|&p| p.max(1.0 - p)).collect();
            let one_step: Vec<f64> =
                curve.gain.iter().zip(&stop).map(|(g, s)| g + s).collect();
            let mut csv = Vec::new();
            export::write_binary_curves_csv(
                &mut csv,
                &p_grid,
                &[
                    ("stop", &stop),
                    ("one_step_best", &one_step),
                    ("gain", &curve.gain),
                    ("v2", &curves.v2),
                    ("v1", &curves.v1),
                    ("v0", &curves.v0),
                ],
            )?;
            set.write("binary_curves.csv", &csv)?;
            set.write_json(
                "maps_summary.json",
                &BinaryMapsSummary {
                    measure_region: curve.measure_region.clone(),
                    max_gain: curve.gain.iter().copied().fold(0.0, f64::max),
                },
            )?;
        }
        ScenarioKind::Custom => {
            return Err(CliError::Config(
                "maps are defined for the binary and trine scenarios".into(),
            ));
        }
    }
    set.finish()?;
    println!("maps written to {}", out.display());
    Ok(())
}

pub fn cmd_routing(config: &RunConfig, case: Option<char>, start: Option<Vec<f64>>, out: &Path) -> Result<(), CliError> {
    if config.scenario != ScenarioKind::Trine {
        return Err(CliError::Config("routing is defined for the trine scenario".into()));
    }
    let resolved = resolve_scenario(config)?;
    let grid = build_grid(config, 3)?;
    let start_belief = match (case, start) {
        (Some(label), None) => {
            let maps = trine::one_step_maps(
                &grid,
                &resolved.table,
                &resolved.params,
                Parallelism::default(),
            );
            let cases = trine::representative_cases(&grid, &maps)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            cases
                .into_iter()
                .find(|c| c.label == label)
                .ok_or_else(|| {
                    CliError::Config(format!("--case must be one of A-E, got {label}"))
                })?
                .belief
        }
        (None, Some(weights)) => Belief::new(weights)
            .map_err(|e| CliError::Config(format!("--start: {e}")))?,
        _ => {
            return Err(CliError::Config(
                "routing needs exactly one of --case A..E or --start b1,b2,b3".into(),
            ))
        }
    };
    let report = trine::routing(&start_belief, &resolved.table, &resolved.params)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut set = ArtifactSet::create(out, "routing", config.content_hash(), Some(config.seed))?;
    set.write_json("routing.json", &report)?;
    set.finish()?;
    println!(
        "routing from {:?}: orientation {:.6}, branch probabilities {:?}",
        report.start.weights(),
        report.best_param,
        report.branches.iter().map(|b| b.probability).collect::<Vec<_>>()
    );
    Ok(())
}

pub fn cmd_bounds(config: &RunConfig, oracle_grid: u32, out: &Path) -> Result<(), CliError> {
    let resolved = resolve_scenario(config)?;
    let grid = build_grid(config, resolved.table.hypotheses())?;
    let mut report = budget_report(config, &resolved, &grid)?;

    if resolved.table.hypotheses() == 2 {
        if !oracle_grid.is_multiple_of(config.grid) {
            return Err(CliError::Config(format!(
                "--oracle-grid {oracle_grid} must be a multiple of --grid {}",
                config.grid
            )));
        }
        let cfg = PlannerConfig {
            horizon: config.horizon,
            c_meas: config.cost,
            grid: &grid,
            library: &resolved.library,
            table: &resolved.table,
            prior: resolved.prior.clone(),
        };
        let output = plan_with(&cfg, config.counter_mode.into(), Parallelism::default())
            .map_err(|e| CliError::Config(e.to_string()))?;
        let oracle = fine_grid_oracle_1d(&cfg, oracle_grid, config.grid_cap).map_err(|e| {
            match e {
                qsd_core::planner::PlanError::Belief(BeliefError::SizeOverflow { .. }) => {
                    CliError::SizeCap(e.to_string())
                }
                other => CliError::Runtime(other.to_string()),
            }
        })?;
        let ratio = (oracle_grid / config.grid) as usize;
        let max_error: Vec<f64> = (0..=config.horizon)
            .map(|t| {
                (0..grid.len())
                    .map(|id| {
                        (output.values.value(t, id) - oracle.values.value(t, id * ratio)).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let within_budget = max_error
            .iter()
            .zip(&report.budgets)
            .all(|(err, budget)| *err <= budget.total + 1e-12);
        report.empirical =
            Some(EmpiricalCheck { oracle_resolution: oracle_grid, max_error, within_budget });
    }

    let mut set = ArtifactSet::create(out, "bounds", config.content_hash(), Some(config.seed))?;
    set.write_json("bounds.json", &report)?;
    set.finish()?;
    if let Some(check) = &report.empirical {
        println!(
            "empirical max error {:?} within budget: {}",
            check.max_error, check.within_budget
        );
    } else {
        println!(
            "budget at stage 0: {:.6e} (action {:.3e} + belief {:.3e})",
            report.budgets[0].total, report.budgets[0].action_term, report.budgets[0].belief_term
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ScalingSummary {
    grids: Vec<u32>,
    grid_sizes: Vec<usize>,
    counters: Vec<qsd_core::counters::CostCounters>,
    slope: f64,
    intercept: f64,
}

pub fn cmd_scaling(config: &RunConfig, grids: &[u32], out: &Path) -> Result<(), CliError> {
    if config.scenario != ScenarioKind::Binary {
        return Err(CliError::Config("scaling sweeps are defined for the binary scenario".into()));
    }
    if grids.len() < 2 {
        return Err(CliError::Config("--grids needs at least two resolutions".into()));
    }
    let theta = config.theta.expect("validated by resolve");
    config.validate()?;
    let rows = binary::scaling_sweep(
        theta,
        config.cost,
        config.horizon,
        config.library,
        grids,
        config.grid_cap,
    )
    .map_err(|e| match e {
        qsd_core::cases::CaseError::Belief(BeliefError::SizeOverflow { .. }) => {
            CliError::SizeCap(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    })?;
    let (slope, intercept) = candidate_scan_slope(&rows);

    let mut set = ArtifactSet::create(out, "scaling", config.content_hash(), Some(config.seed))?;
    // the full sweep CSV carries measured wall times, which are host state;
    // it is flagged volatile, and the deterministic counts live in the
    // summary next to it
    let mut csv = Vec::new();
    export::write_scaling_csv(&mut csv, &rows)?;
    set.write_volatile("scaling.csv", &csv)?;
    set.write_json(
        "scaling_summary.json",
        &ScalingSummary {
            grids: grids.to_vec(),
            grid_sizes: rows.iter().map(|r| r.grid_size).collect(),
            counters: rows.iter().map(|r| r.counters).collect(),
            slope,
            intercept,
        },
    )?;
    set.finish()?;
    println!("candidate-scan slope over {:?}: {slope:.4}", grids);
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
