//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line. Criteria involving the CLI's byte-level determinism live in the
//! CLI crate's own acceptance tests.
//!
//! Heavy criteria are serialized through a mutex so their wall-clock
//! budgets are not distorted by one another.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use qsd_core::belief::{Belief, BeliefGrid};
use qsd_core::bounds::{
    candidate_scan_slope, covering_radius, regularity_constants, total_budget, ActionLipschitz,
    probe_action_lipschitz,
};
use qsd_core::cases::binary::{self, optimal_phi, BinaryScenario};
use qsd_core::cases::trine::{self, TrineScenario};
use qsd_core::exec::Parallelism;
use qsd_core::executor::monte_carlo;
use qsd_core::planner::{
    fine_grid_oracle_1d, one_step_best, one_step_value, one_step_value_routed, plan_with,
    CounterMode, PlannerConfig,
};
use qsd_core::quantum::{
    binary_projective_povm, build_likelihood_table, random_density, random_povm,
    MeasurementLibrary,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static GATE: Mutex<()> = Mutex::new(());

fn criterion<F: FnOnce()>(number: usize, name: &str, budget: Option<Duration>, body: F) {
    let guard = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = started.elapsed();
    let verdict = match (&outcome, budget) {
        (Ok(()), Some(limit)) if elapsed > limit => "FAIL (over time budget)",
        (Ok(()), _) => "PASS",
        (Err(_), _) => "FAIL",
    };
    println!("ACCEPTANCE {number} ({name}): {verdict} [{:.1}s]", elapsed.as_secs_f64());
    drop(guard);
    if let Err(payload) = outcome {
        resume_unwind(payload);
    }
    if let Some(limit) = budget {
        assert!(elapsed <= limit, "criterion {number} exceeded {limit:?}: {elapsed:?}");
    }
}

#[test]
fn criterion_1_helstrom_reproduction() {
    criterion(1, "Helstrom reproduction", Some(Duration::from_secs(30)), || {
        for (i, &theta) in [
            std::f64::consts::FRAC_PI_6,
            std::f64::consts::FRAC_PI_4,
            std::f64::consts::FRAC_PI_3,
            1.0,
        ]
        .iter()
        .enumerate()
        {
            let scenario = BinaryScenario::new(theta, 0.0, 1, 181)
                .unwrap()
                .with_phi(optimal_phi(theta));
            assert!(scenario.phi_grid.len() >= 181);
            let library = scenario.library().unwrap();
            let table = scenario.likelihood_table().unwrap();
            let helstrom = 0.5 * (1.0 + theta.sin());

            // library supremum of the one-step value at the uniform prior
            let best = one_step_best(&Belief::binary(0.5), &table, library.params()).unwrap();
            assert!(
                (best.value - helstrom).abs() <= 1e-9,
                "theta={theta}: sup J1 = {}, Helstrom = {helstrom}",
                best.value
            );

            // Monte Carlo at the planned policy
            let grid = BeliefGrid::build(200, 2, usize::MAX).unwrap();
            let cfg = PlannerConfig {
                horizon: 1,
                c_meas: 0.0,
                grid: &grid,
                library: &library,
                table: &table,
                prior: Belief::binary(0.5),
            };
            let out = plan_with(&cfg, CounterMode::Raw, Parallelism::Parallel).unwrap();
            let n = 1_000_000u64;
            let (summary, _) =
                monte_carlo(&cfg, &out, n, 1000 + i as u64, false, Parallelism::Parallel);
            let stderr = (helstrom * (1.0 - helstrom) / n as f64).sqrt();
            assert!(
                (summary.success_rate - helstrom).abs() <= 3.0 * stderr,
                "theta={theta}: measured {} vs Helstrom {helstrom} (3 stderr = {})",
                summary.success_rate,
                3.0 * stderr
            );
        }
    });
}

#[test]
fn criterion_2_one_step_consistency() {
    criterion(2, "one-step consistency", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(20_002);
        for round in 0..10_000 {
            let m = 2 + (rng.random::<u32>() % 2) as usize;
            let outcomes = 1 + (rng.random::<u32>() % 3) as usize;
            let dim = m;
            let povm = random_povm(dim, outcomes, &mut rng);
            let states: Vec<_> = (0..m).map(|_| random_density(dim, &mut rng)).collect();
            let library = MeasurementLibrary::new(vec![povm.clone()], None).unwrap();
            let table = build_likelihood_table(&states, &library).unwrap();
            let prior = qsd_core::belief::sample_uniform_belief(m, &mut rng);

            // routed and simplified one-step values cancel exactly
            let simplified = one_step_value(&prior, 0, &table);
            let routed = one_step_value_routed(&prior, 0, &table);
            assert!(
                (simplified - routed).abs() <= 1e-12,
                "round {round}: routed {routed} vs simplified {simplified}"
            );

            // guess-labeled POVM success equals post-processing success for
            // every decision rule, and the best rule attains the one-step
            // value; all three routes evaluated on the raw Born traces
            let raw = |i: usize, o: usize| -> f64 {
                povm.effect(o).trace_product(states[i].matrix()).unwrap().re
            };
            let rules = m.pow(outcomes as u32);
            let mut best_rule_value = f64::NEG_INFINITY;
            for code in 0..rules {
                let mut decode = code;
                let rule: Vec<usize> = (0..outcomes)
                    .map(|_| {
                        let g = decode % m;
                        decode /= m;
                        g
                    })
                    .collect();
                // success via post-processing of outcomes
                let post: f64 =
                    (0..outcomes).map(|o| prior.weights()[rule[o]] * raw(rule[o], o)).sum();
                // success via the guess-labeled POVM M_i = sum_{g(o)=i} E_o
                let mut labeled = 0.0;
                for i in 0..m {
                    let mut effect =
                        nalgebra::DMatrix::<num_complex::Complex64>::zeros(dim, dim);
                    for o in 0..outcomes {
                        if rule[o] == i {
                            effect += povm.effect(o).as_dmatrix();
                        }
                    }
                    let tr: num_complex::Complex64 =
                        (effect * states[i].matrix().as_dmatrix()).diagonal().iter().sum();
                    labeled += prior.weights()[i] * tr.re;
                }
                assert!(
                    (post - labeled).abs() <= 1e-12,
                    "round {round}: rule {rule:?} post {post} vs labeled {labeled}"
                );
                best_rule_value = best_rule_value.max(post);
            }
            let one_step_raw: f64 = (0..outcomes)
                .map(|o| {
                    (0..m)
                        .map(|i| prior.weights()[i] * raw(i, o))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            assert!(
                (best_rule_value - one_step_raw).abs() <= 1e-12,
                "round {round}: best rule {best_rule_value} vs one-step {one_step_raw}"
            );
            // and the raw route agrees with the clamped-table pipeline value
            assert!((one_step_raw - simplified).abs() <= 1e-10);
        }
    });
}

#[test]
fn criterion_3_bound_satisfaction() {
    criterion(3, "bound satisfaction", Some(Duration::from_secs(120)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(30_003);
        let oracle_resolution = 20_000u32;
        for round in 0..10 {
            let theta = 0.3 + rng.random::<f64>();
            let c_meas = 0.002 + 0.048 * rng.random::<f64>();
            let horizon = 1 + (rng.random::<u32>() % 3) as usize;
            let n = [50u32, 100, 200][(rng.random::<u32>() % 3) as usize];

            let scenario = BinaryScenario::new(theta, c_meas, horizon, 21).unwrap();
            let library = scenario.library().unwrap();
            let table = scenario.likelihood_table().unwrap();

            let run = |resolution: u32| {
                let grid = BeliefGrid::build(resolution, 2, usize::MAX).unwrap();
                let cfg = PlannerConfig {
                    horizon,
                    c_meas,
                    grid: &grid,
                    library: &library,
                    table: &table,
                    prior: Belief::binary(0.5),
                };
                let out = plan_with(&cfg, CounterMode::Memoized, Parallelism::Parallel).unwrap();
                (grid, out)
            };
            let oracle = {
                let grid = BeliefGrid::build(n, 2, usize::MAX).unwrap();
                let cfg = PlannerConfig {
                    horizon,
                    c_meas,
                    grid: &grid,
                    library: &library,
                    table: &table,
                    prior: Belief::binary(0.5),
                };
                fine_grid_oracle_1d(&cfg, oracle_resolution, usize::MAX).unwrap()
            };

            let stage_errors = |resolution: u32| -> Vec<f64> {
                let (grid, out) = run(resolution);
                let ratio = (oracle_resolution / resolution) as usize;
                (0..=horizon)
                    .map(|t| {
                        (0..grid.len())
                            .map(|id| {
                                (out.values.value(t, id)
                                    - oracle.values.value(t, id * ratio))
                                .abs()
                            })
                            .fold(0.0, f64::max)
                    })
                    .collect()
            };

            // budget from the shared library at the coarse resolution
            let grid = BeliefGrid::build(n, 2, usize::MAX).unwrap();
            let l_ell = ActionLipschitz {
                probed: probe_action_lipschitz(
                    |phi| Ok(binary_projective_povm(phi)),
                    &scenario.states(),
                    &scenario.phi_grid,
                    10,
                )
                .unwrap(),
                analytic: Some(1.0),
            };
            let consts =
                regularity_constants(&table, grid.points(), horizon, l_ell, 77).unwrap();
            let delta_a = covering_radius(&scenario.phi_grid, binary::PHI_PERIOD).unwrap();
            let delta_b = 0.5 / n as f64;

            let errors = stage_errors(n);
            for (t, &err) in errors.iter().enumerate() {
                let budget = total_budget(&consts, delta_a, delta_b, t);
                assert!(
                    err <= budget.total + 1e-12,
                    "round {round} stage {t}: error {err} above budget {}",
                    budget.total
                );
            }

            // doubling the resolution roughly halves the empirical error
            let fine_errors = stage_errors(2 * n);
            let (coarse, fine) = (errors[0], fine_errors[0]);
            if coarse > 1e-12 || fine > 1e-12 {
                let ratio = coarse / fine.max(1e-300);
                assert!(
                    (2.0 / 3.0..=6.0).contains(&ratio),
                    "round {round}: error ratio {ratio} outside the linear-rate band \
                     (coarse {coarse}, fine {fine})"
                );
            }
        }
    });
}

#[test]
fn criterion_4_complexity_law() {
    criterion(4, "complexity law", None, || {
        let grids = [50u32, 100, 200, 400];
        let rows =
            binary::scaling_sweep(std::f64::consts::FRAC_PI_3, 0.01, 2, 21, &grids, usize::MAX)
                .unwrap();
        for row in &rows {
            // closed raw-mode count: H |B| |A| |O| projections minus the
            // logged skips, each scanning the whole grid
            let gross = 2 * row.grid_size as u64 * 21 * 2;
            let expected_calls = gross - row.counters.zero_prob_skips;
            assert_eq!(row.counters.projection_calls, expected_calls, "N={}", row.resolution);
            assert_eq!(
                row.counters.projection_candidate_scans,
                expected_calls * row.grid_size as u64,
                "N={}",
                row.resolution
            );
        }
        let (slope, _) = candidate_scan_slope(&rows);
        assert!(
            (slope - 2.0).abs() <= 0.1,
            "candidate-scan slope {slope} should be quadratic"
        );
    });
}

#[test]
fn criterion_5_trine_structure() {
    criterion(5, "trine structure", Some(Duration::from_secs(300)), || {
        let scenario = TrineScenario::default_desk();
        let table = scenario.likelihood_table();
        let library = scenario.library().unwrap();
        let grid = scenario.grid(usize::MAX).unwrap();

        // likelihood rows are normalized tightly
        for i in 0..3 {
            for a in 0..table.actions() {
                let sum: f64 = (0..3).map(|o| table.get(i, a, o)).sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }

        // center routing splits into exact thirds
        let report =
            trine::routing(&Belief::uniform(3), &table, &scenario.alphas()).unwrap();
        for branch in &report.branches {
            assert!((branch.probability - 1.0 / 3.0).abs() <= 1e-12);
        }

        // horizon-two continuation advantages are nonnegative everywhere
        let maps = trine::finite_horizon(
            &scenario,
            &grid,
            &library,
            &table,
            CounterMode::Memoized,
            Parallelism::Parallel,
        )
        .unwrap();
        for id in 0..grid.len() {
            assert!(maps.d1[id] >= 0.0, "D1 negative at {id}");
            assert!(maps.d0[id] >= 0.0, "D0 negative at {id}");
        }

        // cyclic symmetry holds exactly on the exported tables
        let perm = [1usize, 2, 0];
        let one_step =
            trine::one_step_maps(&grid, &table, &scenario.alphas(), Parallelism::Parallel);
        for id in 0..grid.len() {
            let rid = grid.permuted_id(id, &perm).unwrap();
            for t in 0..=2 {
                assert_eq!(
                    maps.output.values.value(t, id).to_bits(),
                    maps.output.values.value(t, rid).to_bits(),
                    "value table asymmetry at stage {t}, id {id}"
                );
            }
            assert_eq!(maps.d1[id].to_bits(), maps.d1[rid].to_bits());
            assert_eq!(maps.d0[id].to_bits(), maps.d0[rid].to_bits());
            assert_eq!(one_step[id].one_step.to_bits(), one_step[rid].one_step.to_bits());
            assert_eq!(one_step[id].gain.to_bits(), one_step[rid].gain.to_bits());
            assert_eq!(one_step[id].best_action, one_step[rid].best_action);
            // policy kinds agree; measuring entries carry the same orientation
            for t in 0..2 {
                let a = maps.output.policy.action(t, id);
                let b = maps.output.policy.action(t, rid);
                assert_eq!(a.is_stop(), b.is_stop());
                if let (qsd_core::planner::Action::Measure(x), qsd_core::planner::Action::Measure(y)) = (a, b)
                {
                    assert_eq!(x, y);
                }
            }
        }

        // continuation-region fractions are stable under refinement
        let fractions = maps.measure_fraction.clone();
        let finer = TrineScenario::new(24, 120, 0.02, 2).unwrap();
        let finer_grid = finer.grid(usize::MAX).unwrap();
        let finer_maps = trine::finite_horizon(
            &finer,
            &finer_grid,
            &library,
            &finer.likelihood_table(),
            CounterMode::Memoized,
            Parallelism::Parallel,
        )
        .unwrap();
        let denser = TrineScenario::new(48, 60, 0.02, 2).unwrap();
        let denser_lib = denser.library().unwrap();
        let denser_maps = trine::finite_horizon(
            &denser,
            &grid,
            &denser_lib,
            &denser.likelihood_table(),
            CounterMode::Memoized,
            Parallelism::Parallel,
        )
        .unwrap();
        for stage in 0..2 {
            let base = fractions[stage];
            let refined_grid = finer_maps.measure_fraction[stage];
            let refined_lib = denser_maps.measure_fraction[stage];
            assert!(
                (base - refined_grid).abs() <= 0.05,
                "stage {stage}: fraction moved {base} -> {refined_grid} under grid refinement"
            );
            assert!(
                (base - refined_lib).abs() <= 0.05,
                "stage {stage}: fraction moved {base} -> {refined_lib} under library refinement"
            );
        }
    });
}

#[test]
fn criterion_6_online_cost_law() {
    criterion(6, "online cost law", None, || {
        let scenario = BinaryScenario::new(1.0, 0.02, 3, 13).unwrap();
        let library = scenario.library().unwrap();
        let table = scenario.likelihood_table().unwrap();
        let grid = BeliefGrid::build(50, 2, usize::MAX).unwrap();
        let cfg = PlannerConfig {
            horizon: 3,
            c_meas: 0.02,
            grid: &grid,
            library: &library,
            table: &table,
            prior: Belief::binary(0.5),
        };
        let out = plan_with(&cfg, CounterMode::Raw, Parallelism::Parallel).unwrap();
        let (summary, traces) =
            monte_carlo(&cfg, &out, 10_000, 606, true, Parallelism::Parallel);
        let traces = traces.unwrap();
        // stopping times must vary for the regression to be informative
        let min_tau = traces.iter().map(|t| t.stop_stage).min().unwrap();
        let max_tau = traces.iter().map(|t| t.stop_stage).max().unwrap();
        assert!(min_tau < max_tau, "need varied stopping times");

        let (slope, intercept) = summary.ops_regression.expect("varied stopping times");
        assert!(
            (slope - summary.per_step_cost as f64).abs() <= 1e-6,
            "slope {slope} vs per-step cost {}",
            summary.per_step_cost
        );
        assert!(
            intercept >= 0.0 && intercept <= (summary.terminal_cost + 2) as f64,
            "intercept {intercept} outside the constant band"
        );
    });
}
