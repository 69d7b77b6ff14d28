//! One-step measurement values and the projected finite-grid,
//! finite-library backward induction that produces value and policy tables.
//!
//! The recursion compares stopping against the best projected continuation:
//! the terminal row is the stopping value, and each earlier stage evaluates
//! `q(a) = -c + sum_{o: p_o > floor} p_o V_{t+1}(Proj(tau(b, a, o)))` for
//! every library action. Stopping wins ties; measurement ties go to the
//! smallest action id. Per-node updates within a stage are independent, so
//! the sweep parallelizes without changing any output bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    observation_probs, posterior_given_prob, project, project_uniform_1d, Belief, BeliefError,
    BeliefGrid, Projection, PROB_FLOOR,
};
use crate::counters::CostCounters;
use crate::exec::{map_collect, Parallelism};
use crate::quantum::{LikelihoodTable, MeasurementLibrary};
use crate::util::sum_orderless;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("empty measurement library")]
    EmptyLibrary,
    #[error("configuration mismatch: {0}")]
    Inconsistent(String),
    #[error("horizon x cost = {0} exceeds 1, so values would leave [-1, 1]")]
    CostBudget(f64),
    #[error("the fine-grid oracle needs exactly two hypotheses")]
    OracleNeedsBinary,
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Either stop and declare a hypothesis, or take a measurement action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Stop(usize),
    Measure(usize),
}

impl Action {
    pub fn is_stop(&self) -> bool {
        matches!(self, Action::Stop(_))
    }

    /// `("S", hypothesis)` or `("M", action id)`; the CSV export format.
    pub fn kind_index(&self) -> (&'static str, usize) {
        match *self {
            Action::Stop(i) => ("S", i),
            Action::Measure(a) => ("M", a),
        }
    }
}

/// Inputs of one planning run. The grid, library, and table must agree on
/// the hypothesis count and outcome alphabet.
#[derive(Debug, Clone)]
pub struct PlannerConfig<'a> {
    pub horizon: usize,
    pub c_meas: f64,
    pub grid: &'a BeliefGrid,
    pub library: &'a MeasurementLibrary,
    pub table: &'a LikelihoodTable,
    pub prior: Belief,
}

impl PlannerConfig<'_> {
    pub fn validate(&self) -> Result<(), PlanError> {
        let m = self.table.hypotheses();
        if self.grid.dim() != m || self.prior.dim() != m {
            return Err(PlanError::Inconsistent(format!(
                "hypothesis counts differ: table {m}, grid {}, prior {}",
                self.grid.dim(),
                self.prior.dim()
            )));
        }
        if self.library.len() != self.table.actions() {
            return Err(PlanError::Inconsistent(format!(
                "library holds {} actions but the table has {}",
                self.library.len(),
                self.table.actions()
            )));
        }
        if self.library.outcomes() != self.table.outcomes() {
            return Err(PlanError::Inconsistent(format!(
                "library outcome count {} differs from table {}",
                self.library.outcomes(),
                self.table.outcomes()
            )));
        }
        if self.c_meas < 0.0 {
            return Err(PlanError::Inconsistent("measurement cost must be >= 0".into()));
        }
        // keeps |V| <= 1, the scale the error budgets assume
        let budget = self.c_meas * self.horizon as f64;
        if budget > 1.0 {
            return Err(PlanError::CostBudget(budget));
        }
        Ok(())
    }
}

/// Per-stage values on the grid, row `t` for stages `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    horizon: usize,
    rows: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn value(&self, stage: usize, grid_id: usize) -> f64 {
        self.rows[stage][grid_id]
    }

    pub fn row(&self, stage: usize) -> &[f64] {
        &self.rows[stage]
    }
}

/// Per-stage decision rule on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    rows: Vec<Vec<Action>>,
}

impl PolicyTable {
    pub fn action(&self, stage: usize, grid_id: usize) -> Action {
        self.rows[stage][grid_id]
    }

    pub fn row(&self, stage: usize) -> &[Action] {
        &self.rows[stage]
    }

    /// Share of grid points at which the stage policy measures.
    pub fn measure_fraction(&self, stage: usize) -> f64 {
        let row = &self.rows[stage];
        row.iter().filter(|a| !a.is_stop()).count() as f64 / row.len() as f64
    }
}

/// Whether projections are recomputed every stage (`Raw`, the cost model
/// the complexity analysis assumes) or precomputed once per
/// `(belief, action, outcome)` and reused across stages (`Memoized`). The
/// two modes produce bit-identical tables; only the counters differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CounterMode {
    Raw,
    Memoized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub counters: CostCounters,
    pub mode: CounterMode,
}

#[derive(Clone, Copy)]
enum Projector {
    /// Linear scan over the whole grid, the analyzed baseline.
    Scan,
    /// O(1) bracket search on uniform two-hypothesis grids; bit-identical
    /// to the scan. Reserved for the fine-grid oracle.
    Uniform1d,
}

impl Projector {
    fn project(self, b: &Belief, grid: &BeliefGrid, counters: &mut CostCounters) -> Projection {
        match self {
            Projector::Scan => project(b, grid, counters),
            Projector::Uniform1d => project_uniform_1d(b, grid, counters),
        }
    }
}

/// Plans with raw counters and the default execution strategy.
pub fn plan(cfg: &PlannerConfig) -> Result<PlanOutput, PlanError> {
    plan_with(cfg, CounterMode::Raw, Parallelism::default())
}

/// Runs the backward induction with an explicit counter mode and execution
/// strategy.
pub fn plan_with(
    cfg: &PlannerConfig,
    mode: CounterMode,
    par: Parallelism,
) -> Result<PlanOutput, PlanError> {
    cfg.validate()?;
    let (values, policy, counters) =
        backward_induction(cfg.grid, cfg.table, cfg.horizon, cfg.c_meas, Projector::Scan, mode, par);
    Ok(PlanOutput { values, policy, counters, mode })
}

/// Projected-table lookup for an arbitrary belief: the value of its nearest
/// grid point.
pub fn value_at(
    b: &Belief,
    stage: usize,
    values: &ValueTable,
    grid: &BeliefGrid,
    counters: &mut CostCounters,
) -> f64 {
    let proj = project(b, grid, counters);
    values.value(stage, proj.grid_id)
}

/// Reference run for two-hypothesis configs: the same recursion on a much
/// finer grid, standing in for the exact finite-library value. Meant for
/// bound checks and tests only.
pub struct OracleOutput {
    pub grid: BeliefGrid,
    pub values: ValueTable,
    pub policy: PolicyTable,
}

pub fn fine_grid_oracle_1d(
    cfg: &PlannerConfig,
    resolution: u32,
    cap: usize,
) -> Result<OracleOutput, PlanError> {
    if cfg.table.hypotheses() != 2 {
        return Err(PlanError::OracleNeedsBinary);
    }
    cfg.validate()?;
    let grid = BeliefGrid::build(resolution, 2, cap)?;
    let (values, policy, _) = backward_induction(
        &grid,
        cfg.table,
        cfg.horizon,
        cfg.c_meas,
        Projector::Uniform1d,
        CounterMode::Memoized,
        Parallelism::default(),
    );
    Ok(OracleOutput { grid, values, policy })
}

// ---------------------------------------------------------------------------
// One-step quantities
// ---------------------------------------------------------------------------

/// Expected stopping reward after one measurement, in the simplified form
/// `sum_o max_i b(i) l_i(a, o)`.
///
/// In debug builds this also evaluates the routed form (posterior, then
/// best declaration, averaged over outcomes) and checks that the two agree
/// to 1e-12; the cancellation of the posterior normalizer is what makes
/// them equal.
pub fn one_step_value(b: &Belief, action: usize, table: &LikelihoodTable) -> f64 {
    let mut terms: Vec<f64> = (0..table.outcomes())
        .map(|o| {
            let ls = table.likelihoods(action, o);
            b.weights()
                .iter()
                .zip(ls)
                .map(|(w, l)| w * l)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let simplified = sum_orderless(&mut terms);
    debug_assert!(
        (simplified - one_step_value_routed(b, action, table)).abs() <= 1e-12,
        "routed and simplified one-step values disagree"
    );
    simplified
}

/// Routed form of the one-step value: average over outcomes of the
/// posterior's stopping value.
pub fn one_step_value_routed(b: &Belief, action: usize, table: &LikelihoodTable) -> f64 {
    let probs = observation_probs(b, action, table);
    let mut terms = Vec::with_capacity(probs.len());
    for (o, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            let post = posterior_given_prob(b, action, o, p, table);
            terms.push(p * post.stop_value());
        }
    }
    sum_orderless(&mut terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepBest {
    pub value: f64,
    pub action: usize,
    /// The library parameter tag of the best action, when the library
    /// carries tags.
    pub param: Option<f64>,
}

/// Best one-step value over the library; ties go to the smallest action id.
pub fn one_step_best(
    b: &Belief,
    table: &LikelihoodTable,
    params: Option<&[f64]>,
) -> Result<OneStepBest, PlanError> {
    if table.actions() == 0 {
        return Err(PlanError::EmptyLibrary);
    }
    let mut best = OneStepBest { value: f64::NEG_INFINITY, action: 0, param: None };
    for a in 0..table.actions() {
        let v = one_step_value(b, a, table);
        if v > best.value {
            best = OneStepBest { value: v, action: a, param: params.map(|p| p[a]) };
        }
    }
    Ok(best)
}

/// One-step measurement gain over stopping immediately; nonnegative, zero
/// at the simplex vertices.
pub fn measurement_gain(b: &Belief, table: &LikelihoodTable) -> Result<f64, PlanError> {
    let best = one_step_best(b, table, None)?;
    Ok((best.value - b.stop_value()).max(0.0))
}

// ---------------------------------------------------------------------------
// Backward induction engine
// ---------------------------------------------------------------------------

/// Precomputed stage-independent continuation data for one (node, action):
/// the outcome probabilities above the floor and their projected targets.
struct MemoEntry {
    contribs: Vec<(f64, u32)>,
}

fn backward_induction(
    grid: &BeliefGrid,
    table: &LikelihoodTable,
    horizon: usize,
    c_meas: f64,
    projector: Projector,
    mode: CounterMode,
    par: Parallelism,
) -> (ValueTable, PolicyTable, CostCounters) {
    let size = grid.len();
    let mut counters = CostCounters::default();

    // terminal stage: stop and declare the most likely hypothesis
    let terminal: Vec<(f64, Action)> = map_collect(par, size, |id| {
        let b = grid.point(id);
        (b.stop_value(), Action::Stop(b.argmax()))
    });
    counters.stop_evals += size as u64;

    let mut value_rows = vec![Vec::new(); horizon + 1];
    let mut policy_rows = vec![Vec::new(); horizon + 1];
    let (row_v, row_a): (Vec<f64>, Vec<Action>) = terminal.into_iter().unzip();
    value_rows[horizon] = row_v;
    policy_rows[horizon] = row_a;

    if horizon == 0 {
        return (
            ValueTable { horizon, rows: value_rows },
            PolicyTable { rows: policy_rows },
            counters,
        );
    }

    let memo = match mode {
        CounterMode::Raw => None,
        CounterMode::Memoized => {
            let (memo, memo_counters) = build_memo(grid, table, projector, par);
            counters.merge(&memo_counters);
            Some(memo)
        }
    };

    for t in (0..horizon).rev() {
        let next = std::mem::take(&mut value_rows[t + 1]);
        let results: Vec<(f64, Action, CostCounters)> = match &memo {
            None => map_collect(par, size, |id| {
                node_update_raw(id, grid, table, c_meas, projector, &next)
            }),
            Some(memo) => map_collect(par, size, |id| {
                node_update_memoized(id, grid, &memo[id], c_meas, &next)
            }),
        };
        value_rows[t + 1] = next;
        let mut vs = Vec::with_capacity(size);
        let mut acts = Vec::with_capacity(size);
        for (v, a, c) in results {
            vs.push(v);
            acts.push(a);
            counters.merge(&c);
        }
        value_rows[t] = vs;
        policy_rows[t] = acts;
    }

    (
        ValueTable { horizon, rows: value_rows },
        PolicyTable { rows: policy_rows },
        counters,
    )
}

/// Continuation value from collected outcome contributions. Both counter
/// modes funnel through this so their arithmetic is identical.
#[inline]
fn continuation_value(contribs: &mut [f64], c_meas: f64) -> f64 {
    sum_orderless(contribs) - c_meas
}

fn node_update_raw(
    id: usize,
    grid: &BeliefGrid,
    table: &LikelihoodTable,
    c_meas: f64,
    projector: Projector,
    next_row: &[f64],
) -> (f64, Action, CostCounters) {
    let b = grid.point(id);
    let mut counters = CostCounters::default();
    counters.stop_evals += 1;
    let v_stop = b.stop_value();

    let outcomes = table.outcomes();
    let mut probs = Vec::with_capacity(outcomes);
    let mut scratch = Vec::with_capacity(grid.dim());
    let mut contribs = Vec::with_capacity(outcomes);

    let mut best_q = f64::NEG_INFINITY;
    let mut best_a = 0usize;
    for a in 0..table.actions() {
        table.outcome_probs_into(b.weights(), a, &mut probs, &mut scratch);
        counters.obs_evals += outcomes as u64;
        contribs.clear();
        for o in 0..outcomes {
            let p = probs[o];
            if p > PROB_FLOOR {
                let post = posterior_given_prob(b, a, o, p, table);
                counters.posterior_evals += 1;
                let proj = projector.project(&post, grid, &mut counters);
                counters.value_lookups += 1;
                contribs.push(p * next_row[proj.grid_id]);
                counters.aggregations += 1;
            } else {
                counters.zero_prob_skips += 1;
            }
        }
        let q = continuation_value(&mut contribs, c_meas);
        counters.actmax_comparisons += 1;
        if q > best_q {
            best_q = q;
            best_a = a;
        }
    }

    if v_stop >= best_q {
        (v_stop, Action::Stop(b.argmax()), counters)
    } else {
        (best_q, Action::Measure(best_a), counters)
    }
}

fn node_update_memoized(
    id: usize,
    grid: &BeliefGrid,
    memo_row: &[MemoEntry],
    c_meas: f64,
    next_row: &[f64],
) -> (f64, Action, CostCounters) {
    let b = grid.point(id);
    let mut counters = CostCounters::default();
    counters.stop_evals += 1;
    let v_stop = b.stop_value();

    let mut contribs = Vec::new();
    let mut best_q = f64::NEG_INFINITY;
    let mut best_a = 0usize;
    for (a, entry) in memo_row.iter().enumerate() {
        contribs.clear();
        for &(p, target) in &entry.contribs {
            counters.value_lookups += 1;
            contribs.push(p * next_row[target as usize]);
            counters.aggregations += 1;
        }
        let q = continuation_value(&mut contribs, c_meas);
        counters.actmax_comparisons += 1;
        if q > best_q {
            best_q = q;
            best_a = a;
        }
    }

    if v_stop >= best_q {
        (v_stop, Action::Stop(b.argmax()), counters)
    } else {
        (best_q, Action::Measure(best_a), counters)
    }
}

fn build_memo(
    grid: &BeliefGrid,
    table: &LikelihoodTable,
    projector: Projector,
    par: Parallelism,
) -> (Vec<Vec<MemoEntry>>, CostCounters) {
    let results: Vec<(Vec<MemoEntry>, CostCounters)> = map_collect(par, grid.len(), |id| {
        let b = grid.point(id);
        let mut counters = CostCounters::default();
        let outcomes = table.outcomes();
        let mut probs = Vec::with_capacity(outcomes);
        let mut scratch = Vec::with_capacity(grid.dim());
        let mut row = Vec::with_capacity(table.actions());
        for a in 0..table.actions() {
            table.outcome_probs_into(b.weights(), a, &mut probs, &mut scratch);
            counters.obs_evals += outcomes as u64;
            let mut contribs = Vec::with_capacity(outcomes);
            for o in 0..outcomes {
                let p = probs[o];
                if p > PROB_FLOOR {
                    let post = posterior_given_prob(b, a, o, p, table);
                    counters.posterior_evals += 1;
                    let proj = projector.project(&post, grid, &mut counters);
                    contribs.push((p, proj.grid_id as u32));
                } else {
                    counters.zero_prob_skips += 1;
                }
            }
            row.push(MemoEntry { contribs });
        }
        (row, counters)
    });
    let mut counters = CostCounters::default();
    let mut memo = Vec::with_capacity(grid.len());
    for (row, c) in results {
        memo.push(row);
        counters.merge(&c);
    }
    (memo, counters)
}
