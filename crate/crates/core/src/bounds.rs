//! Regularity-constant estimation and discretization error budgets: the
//! belief-grid term, the action-library term, their per-stage Lipschitz
//! sequences, and the instrumented complexity reports that check the
//! planner's measured operation counts against the closed cost law.
//!
//! The closed-form constants here are deliberately coarse upper bounds;
//! the sampled counterparts are reported alongside them so slack is
//! visible, and budgets always use the provable side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{observation_probs, sample_uniform_belief, Belief, BeliefGrid};
use crate::counters::CostCounters;
use crate::planner::{one_step_value, CounterMode, PlanOutput};
use crate::quantum::{
    build_likelihood_table, DensityOperator, LikelihoodTable, MeasurementLibrary, Povm,
    QuantumError,
};
use crate::util::log_log_fit;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Observation probabilities at or below this floor are excluded from the
/// nondegeneracy constant and from budget-relevant posterior statistics.
pub const ETA_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("the measurement library carries no parameter tags")]
    MissingParams,
    #[error("every observation probability fell at or below the floor")]
    AllDegenerate,
    #[error("nondegeneracy constant must be positive")]
    EtaNonPositive,
    #[error("the planner has not run: counters are empty")]
    CountersEmpty,
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Belief-Lipschitz constant of the observation probability:
/// `max_{a,o} sum_i l_i(a,o)`. Valid because the observation probability
/// is linear in the belief and paired with the max-norm.
pub fn obs_lipschitz(table: &LikelihoodTable) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..table.actions() {
        for o in 0..table.outcomes() {
            let sum: f64 = table.likelihoods(a, o).iter().sum();
            worst = worst.max(sum);
        }
    }
    worst
}

/// Action-Lipschitz constant of the likelihoods: a probed finite-difference
/// supremum together with the analytic derivative bound when the family has
/// one. Budgets use the larger of the two.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActionLipschitz {
    pub probed: f64,
    pub analytic: Option<f64>,
}

impl ActionLipschitz {
    pub fn value(&self) -> f64 {
        self.analytic.map_or(self.probed, |a| a.max(self.probed))
    }
}

/// Supremum of `|l_i(theta, o) - l_i(theta', o)| / |theta - theta'|` over
/// adjacent library parameters, refined by `refine` extra probes per gap.
pub fn probe_action_lipschitz<F>(
    povm_at: F,
    states: &[DensityOperator],
    params: &[f64],
    refine: usize,
) -> Result<f64, BoundsError>
where
    F: Fn(f64) -> Result<Povm, QuantumError>,
{
    if params.is_empty() {
        return Err(BoundsError::MissingParams);
    }
    let mut worst = 0.0f64;
    for pair in params.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let steps = refine.max(1);
        let mut prev_theta = lo;
        let mut prev = likelihood_rows(&povm_at(lo)?, states)?;
        for s in 1..=steps {
            let theta = lo + (hi - lo) * s as f64 / steps as f64;
            let cur = likelihood_rows(&povm_at(theta)?, states)?;
            let d_theta = theta - prev_theta;
            for (a, b) in prev.iter().zip(&cur) {
                worst = worst.max((a - b).abs() / d_theta);
            }
            prev = cur;
            prev_theta = theta;
        }
    }
    Ok(worst)
}

fn likelihood_rows(povm: &Povm, states: &[DensityOperator]) -> Result<Vec<f64>, QuantumError> {
    let mut rows = Vec::with_capacity(states.len() * povm.outcomes());
    for state in states {
        for o in 0..povm.outcomes() {
            rows.push(crate::quantum::born_prob(povm.effect(o), state)?);
        }
    }
    Ok(rows)
}

/// Nondegeneracy floor over a belief set: the smallest observation
/// probability above [`ETA_FLOOR`], with the `(belief index, action,
/// outcome)` triple attaining it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub eta: f64,
    pub argmin: (usize, usize, usize),
}

pub fn estimate_eta(
    table: &LikelihoodTable,
    beliefs: &[Belief],
    floor: f64,
) -> Result<EtaEstimate, BoundsError> {
    let mut best: Option<EtaEstimate> = None;
    for (bi, b) in beliefs.iter().enumerate() {
        for a in 0..table.actions() {
            let probs = observation_probs(b, a, table);
            for (o, &p) in probs.iter().enumerate() {
                if p > floor && best.as_ref().is_none_or(|cur| p < cur.eta) {
                    best = Some(EtaEstimate { eta: p, argmin: (bi, a, o) });
                }
            }
        }
    }
    best.ok_or(BoundsError::AllDegenerate)
}

/// Sampled supremum of posterior belief-Lipschitz ratios
/// `||tau(b,a,o) - tau(b',a,o)|| / ||b - b'||` over random belief pairs,
/// restricted to outcomes above [`ETA_FLOOR`] at both beliefs. Reported
/// next to the analytic bound to show its slack.
pub fn sampled_posterior_belief_lipschitz(
    table: &LikelihoodTable,
    samples: u64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = table.hypotheses();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let b = sample_uniform_belief(m, &mut rng);
        let b2 = sample_uniform_belief(m, &mut rng);
        let dist = b.linf_distance(&b2);
        if dist < 1e-9 {
            continue;
        }
        for a in 0..table.actions() {
            let p1 = observation_probs(&b, a, table);
            let p2 = observation_probs(&b2, a, table);
            for o in 0..table.outcomes() {
                if p1[o] > ETA_FLOOR && p2[o] > ETA_FLOOR {
                    let t1 = crate::belief::posterior_given_prob(&b, a, o, p1[o], table);
                    let t2 = crate::belief::posterior_given_prob(&b2, a, o, p2[o], table);
                    worst = worst.max(t1.linf_distance(&t2) / dist);
                }
            }
        }
    }
    worst
}

/// Backward recursion for the belief-Lipschitz sequence:
/// `L_H = 1`, `L_t = max(1, |O| (C_P V_sup + L_{t+1} C_tau))`.
pub fn belief_lipschitz_seq(
    c_p_b: f64,
    c_tau_b: f64,
    outcomes: usize,
    horizon: usize,
    v_sup: f64,
) -> Vec<f64> {
    let mut seq = vec![1.0; horizon + 1];
    for t in (0..horizon).rev() {
        seq[t] = 1.0f64.max(outcomes as f64 * (c_p_b * v_sup + seq[t + 1] * c_tau_b));
    }
    seq
}

/// Per-stage action-Lipschitz constants of the continuation functional:
/// `K_t = |O| [L_ell V_sup + L_{t+1} (L_ell / eta + L_ell / eta^2)]`.
pub fn action_lipschitz_seq(
    l_ell: f64,
    eta: f64,
    l_seq: &[f64],
    outcomes: usize,
    v_sup: f64,
) -> Result<Vec<f64>, BoundsError> {
    if eta <= 0.0 {
        return Err(BoundsError::EtaNonPositive);
    }
    let horizon = l_seq.len() - 1;
    let posterior_term = l_ell / eta + l_ell / (eta * eta);
    Ok((0..horizon)
        .map(|t| outcomes as f64 * (l_ell * v_sup + l_seq[t + 1] * posterior_term))
        .collect())
}

/// Covering radius of a parameter library under the circular distance with
/// the given period: half the largest circular gap.
pub fn covering_radius(params: &[f64], period: f64) -> Result<f64, BoundsError> {
    if params.is_empty() {
        return Err(BoundsError::MissingParams);
    }
    let mut folded: Vec<f64> = params.iter().map(|p| p.rem_euclid(period)).collect();
    folded.sort_by(f64::total_cmp);
    if folded.len() == 1 {
        return Ok(period / 2.0);
    }
    let mut max_gap = period - folded[folded.len() - 1] + folded[0];
    for pair in folded.windows(2) {
        max_gap = max_gap.max(pair[1] - pair[0]);
    }
    Ok(max_gap / 2.0)
}

/// Everything the budgets need: the observation and posterior constants,
/// the likelihood action constant, the nondegeneracy floor, and the
/// derived per-stage sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub c_p_b: f64,
    /// Analytic posterior belief-Lipschitz bound `C_P/eta + C_P/eta^2`,
    /// the one budgets use.
    pub c_tau_b: f64,
    /// Sampled posterior ratio supremum, for slack reporting.
    pub c_tau_b_sampled: f64,
    pub l_ell: ActionLipschitz,
    pub eta: EtaEstimate,
    pub v_sup: f64,
    /// Belief-Lipschitz constants per stage, `l_seq[t]` for `V_t`.
    pub l_seq: Vec<f64>,
    /// Action constants per stage `0..horizon`.
    pub k_seq: Vec<f64>,
}

pub fn regularity_constants(
    table: &LikelihoodTable,
    grid_beliefs: &[Belief],
    horizon: usize,
    l_ell: ActionLipschitz,
    sample_seed: u64,
) -> Result<RegularityConstants, BoundsError> {
    let c_p_b = obs_lipschitz(table);
    let eta = estimate_eta(table, grid_beliefs, ETA_FLOOR)?;
    let c_tau_b = c_p_b / eta.eta + c_p_b / (eta.eta * eta.eta);
    let c_tau_b_sampled = sampled_posterior_belief_lipschitz(table, 2000, sample_seed);
    let v_sup = 1.0;
    let l_seq = belief_lipschitz_seq(c_p_b, c_tau_b, table.outcomes(), horizon, v_sup);
    let k_seq = action_lipschitz_seq(l_ell.value(), eta.eta, &l_seq, table.outcomes(), v_sup)?;
    Ok(RegularityConstants {
        c_p_b,
        c_tau_b,
        c_tau_b_sampled,
        l_ell,
        eta,
        v_sup,
        l_seq,
        k_seq,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StageBudget {
    pub stage: usize,
    pub belief_lipschitz: f64,
    pub action_lipschitz: Option<f64>,
    /// Running sums from the budget's stage up to this one.
    pub partial_belief_term: f64,
    pub partial_action_term: f64,
}

/// Total approximation budget from stage `t`: the action term
/// `delta_A sum_{s=t}^{H-1} K_s` plus the belief term
/// `delta_B sum_{s=t+1}^{H} L_s` (grid variant) or
/// `delta_B sum_{s=t}^{H} L_s` (any-belief variant via the projected
/// estimator).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub stage: usize,
    pub horizon: usize,
    pub delta_a: f64,
    pub delta_b: f64,
    pub action_term: f64,
    pub belief_term: f64,
    pub total: f64,
    pub belief_term_any: f64,
    pub total_any: f64,
    /// `(H - t) max L delta_B`: the uniform-Lipschitz shortcut.
    pub uniform_belief: f64,
    /// `(H - t) max K delta_A`: the uniform action shortcut.
    pub uniform_action: f64,
    pub per_stage: Vec<StageBudget>,
}

pub fn total_budget(
    consts: &RegularityConstants,
    delta_a: f64,
    delta_b: f64,
    stage: usize,
) -> ErrorBudget {
    let horizon = consts.l_seq.len() - 1;
    assert!(stage <= horizon);
    let belief_sum: f64 = consts.l_seq[stage + 1..=horizon].iter().sum();
    let belief_sum_any: f64 = consts.l_seq[stage..=horizon].iter().sum();
    let action_sum: f64 = consts.k_seq[stage..horizon].iter().sum();
    let l_max = consts.l_seq[stage..=horizon].iter().copied().fold(0.0, f64::max);
    let k_max = consts.k_seq[stage..horizon].iter().copied().fold(0.0, f64::max);
    let stages_left = (horizon - stage) as f64;

    let mut per_stage = Vec::new();
    let mut running_belief = 0.0;
    let mut running_action = 0.0;
    for s in stage..=horizon {
        if s > stage {
            running_belief += delta_b * consts.l_seq[s];
        }
        let action_lipschitz = (s < horizon).then(|| consts.k_seq[s]);
        if let Some(k) = action_lipschitz {
            running_action += delta_a * k;
        }
        per_stage.push(StageBudget {
            stage: s,
            belief_lipschitz: consts.l_seq[s],
            action_lipschitz,
            partial_belief_term: running_belief,
            partial_action_term: running_action,
        });
    }

    let action_term = delta_a * action_sum;
    let belief_term = delta_b * belief_sum;
    ErrorBudget {
        stage,
        horizon,
        delta_a,
        delta_b,
        action_term,
        belief_term,
        total: action_term + belief_term,
        belief_term_any: delta_b * belief_sum_any,
        total_any: action_term + delta_b * belief_sum_any,
        uniform_belief: stages_left * l_max * delta_b,
        uniform_action: stages_left * k_max * delta_a,
        per_stage,
    }
}

/// Measured operation counts checked against the closed raw-mode count:
/// projection calls must equal `H |B| |A| |O|` minus the logged
/// zero-probability skips, and candidate scans must equal calls times the
/// grid size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub mode: CounterMode,
    pub horizon: usize,
    pub grid_size: usize,
    pub actions: usize,
    pub outcomes: usize,
    pub hypotheses: usize,
    pub counters: CostCounters,
    pub expected_projection_calls: u64,
    pub expected_candidate_scans: u64,
    pub projection_calls_match: bool,
    pub candidate_scans_match: bool,
}

pub fn complexity_report(
    output: &PlanOutput,
    grid: &BeliefGrid,
    table: &LikelihoodTable,
) -> Result<ComplexityReport, BoundsError> {
    if output.counters.is_empty() {
        return Err(BoundsError::CountersEmpty);
    }
    let horizon = output.values.horizon() as u64;
    let size = grid.len() as u64;
    let sweeps = match output.mode {
        // raw mode projects every stage; memoized projects once up front
        CounterMode::Raw => horizon,
        CounterMode::Memoized => horizon.min(1),
    };
    let gross = sweeps * size * table.actions() as u64 * table.outcomes() as u64;
    // the counters accumulate skips across exactly the same sweeps
    let expected_projection_calls = gross - output.counters.zero_prob_skips;
    let expected_candidate_scans = expected_projection_calls * size;
    Ok(ComplexityReport {
        mode: output.mode,
        horizon: output.values.horizon(),
        grid_size: grid.len(),
        actions: table.actions(),
        outcomes: table.outcomes(),
        hypotheses: table.hypotheses(),
        counters: output.counters,
        expected_projection_calls,
        expected_candidate_scans,
        projection_calls_match: output.counters.projection_calls == expected_projection_calls,
        candidate_scans_match: output.counters.projection_candidate_scans
            == expected_candidate_scans,
    })
}

/// One grid resolution of a scaling sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScalingRow {
    pub resolution: u32,
    pub grid_size: usize,
    pub counters: CostCounters,
    pub wall_secs: f64,
}

/// Log-log slope of projection candidate scans against grid size;
/// quadratic scaling shows up as a slope of 2.
pub fn candidate_scan_slope(rows: &[ScalingRow]) -> (f64, f64) {
    let xs: Vec<f64> = rows.iter().map(|r| r.grid_size as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.counters.projection_candidate_scans as f64).collect();
    log_log_fit(&xs, &ys)
}

/// Sampled belief-Lipschitz ratio of one value row over random grid-point
/// pairs; the recursion's `L_t` must upper-bound it.
pub fn sampled_value_lipschitz(values: &[f64], grid: &BeliefGrid, pairs: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let i = (rng.random::<u64>() % grid.len() as u64) as usize;
        let j = (rng.random::<u64>() % grid.len() as u64) as usize;
        if i == j {
            continue;
        }
        let dist = grid.point(i).linf_distance(grid.point(j));
        if dist > 0.0 {
            worst = worst.max((values[i] - values[j]).abs() / dist);
        }
    }
    worst
}

/// Sampled action-Lipschitz ratio of the final-stage continuation
/// functional (whose future value is the stopping value, the one case
/// computable without grid projection): max over beliefs and probe-angle
/// pairs of `|J1(b, theta) - J1(b, theta')| / |theta - theta'|`.
pub fn sampled_continuation_action_ratio<F>(
    povm_at: F,
    states: &[DensityOperator],
    params: &[f64],
    beliefs: &[Belief],
    refine: usize,
) -> Result<f64, BoundsError>
where
    F: Fn(f64) -> Result<Povm, QuantumError>,
{
    if params.len() < 2 {
        return Err(BoundsError::MissingParams);
    }
    let mut probes = Vec::new();
    for pair in params.windows(2) {
        let steps = refine.max(1);
        for s in 0..steps {
            probes.push(pair[0] + (pair[1] - pair[0]) * s as f64 / steps as f64);
        }
    }
    probes.push(*params.last().unwrap());
    let povms = probes.iter().map(|&p| povm_at(p)).collect::<Result<Vec<_>, _>>()?;
    let library = MeasurementLibrary::new(povms, None)?;
    let table = build_likelihood_table(states, &library)?;
    let mut worst = 0.0f64;
    for b in beliefs {
        let mut prev = one_step_value(b, 0, &table);
        for a in 1..table.actions() {
            let cur = one_step_value(b, a, &table);
            let d = probes[a] - probes[a - 1];
            if d > 0.0 {
                worst = worst.max((cur - prev).abs() / d);
            }
            prev = cur;
        }
    }
    Ok(worst)
}
