//! Online execution of a planned policy: the hidden hypothesis is drawn
//! once, outcomes are sampled from its likelihood row, the belief is
//! tracked exactly, and the policy is read at the belief's nearest grid
//! point until it declares.
//!
//! Episodes are reproducible: episode `k` of a run with seed `s` uses an
//! independent ChaCha stream `(s, k)`, so summaries are bit-identical
//! across thread counts and episode batching.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{bayes_update, project, Belief};
use crate::counters::CostCounters;
use crate::exec::{map_collect, Parallelism};
use crate::planner::{Action, PlanOutput, PlannerConfig};

/// One measurement step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub stage: usize,
    pub action: usize,
    pub outcome: usize,
}

/// Full record of one episode. The belief track holds the exact,
/// un-projected online posteriors, starting at the prior; projection
/// happens only inside policy lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub hidden: usize,
    pub steps: Vec<EpisodeStep>,
    pub beliefs: Vec<Belief>,
    pub stop_stage: usize,
    pub declared: usize,
    pub correct: bool,
    /// Unit operation count of the agent's work: `|B| M + 1` per policy
    /// lookup, `M` per posterior update, 1 per received outcome.
    pub online_ops: u64,
}

/// Aggregate statistics over independent episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub episodes: u64,
    pub seed: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub success_stderr: f64,
    pub mean_stop_time: f64,
    pub stop_time_stderr: f64,
    /// Mean of `1(correct) - c_meas * stop_time`.
    pub mean_reward: f64,
    pub mean_online_ops: f64,
    /// Deterministic per-step online cost: policy lookup `|B| M + 1`,
    /// outcome receipt 1, posterior update `M`.
    pub per_step_cost: u64,
    /// Cost of the final declaring lookup.
    pub terminal_cost: u64,
    /// `E[stop_time] * per_step_cost + terminal_cost`: the linear online
    /// cost model evaluated at the measured mean stopping time.
    pub predicted_mean_ops: f64,
    /// Least-squares fit of per-episode ops against realized stopping
    /// times; `None` when every episode stopped at the same stage.
    pub ops_regression: Option<(f64, f64)>,
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    // walks the whole row so the per-step work is deterministic
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if chosen.is_none() && u < acc {
            chosen = Some(i);
        }
    }
    chosen.unwrap_or(probs.len() - 1)
}

/// Runs one episode under the planned policy.
pub fn run_episode(cfg: &PlannerConfig, tables: &PlanOutput, rng: &mut ChaCha8Rng) -> EpisodeTrace {
    let m = cfg.table.hypotheses();
    let lookup_cost = (cfg.grid.len() * m + 1) as u64;
    let hidden = sample_index(rng, cfg.prior.weights());

    let mut belief = cfg.prior.clone();
    let mut beliefs = vec![belief.clone()];
    let mut steps = Vec::new();
    let mut online_ops = 0u64;
    let mut counters = CostCounters::default();

    for stage in 0..=cfg.horizon {
        let proj = project(&belief, cfg.grid, &mut counters);
        online_ops += lookup_cost;
        match tables.policy.action(stage, proj.grid_id) {
            Action::Stop(declared) => {
                return EpisodeTrace {
                    hidden,
                    steps,
                    beliefs,
                    stop_stage: stage,
                    declared,
                    correct: declared == hidden,
                    online_ops,
                };
            }
            Action::Measure(action) => {
                // the environment samples from the hidden state's row
                let row: Vec<f64> =
                    (0..cfg.table.outcomes()).map(|o| cfg.table.get(hidden, action, o)).collect();
                let outcome = sample_index(rng, &row);
                online_ops += 1; // receive the outcome
                belief = bayes_update(&belief, action, outcome, cfg.table)
                    .expect("sampled outcomes have positive probability");
                online_ops += m as u64;
                steps.push(EpisodeStep { stage, action, outcome });
                beliefs.push(belief.clone());
            }
        }
    }
    unreachable!("the terminal policy row contains only declarations");
}

/// Integer per-episode aggregates; summing them is order-independent, so
/// parallel reduction cannot perturb the summary.
#[derive(Default, Clone, Copy)]
struct BatchStats {
    episodes: u64,
    successes: u64,
    sum_tau: u64,
    sum_tau_sq: u128,
    sum_ops: u64,
    sum_ops_sq: u128,
    sum_tau_ops: u128,
}

impl BatchStats {
    fn absorb(&mut self, trace: &EpisodeTrace) {
        let tau = trace.stop_stage as u64;
        self.episodes += 1;
        self.successes += trace.correct as u64;
        self.sum_tau += tau;
        self.sum_tau_sq += (tau as u128) * (tau as u128);
        self.sum_ops += trace.online_ops;
        self.sum_ops_sq += (trace.online_ops as u128) * (trace.online_ops as u128);
        self.sum_tau_ops += (tau as u128) * (trace.online_ops as u128);
    }

    fn merge(&mut self, other: &BatchStats) {
        self.episodes += other.episodes;
        self.successes += other.successes;
        self.sum_tau += other.sum_tau;
        self.sum_tau_sq += other.sum_tau_sq;
        self.sum_ops += other.sum_ops;
        self.sum_ops_sq += other.sum_ops_sq;
        self.sum_tau_ops += other.sum_tau_ops;
    }
}

/// Runs `episodes` independent episodes and aggregates them. With
/// `collect_traces` the individual traces come back in episode order.
pub fn monte_carlo(
    cfg: &PlannerConfig,
    tables: &PlanOutput,
    episodes: u64,
    seed: u64,
    collect_traces: bool,
    par: Parallelism,
) -> (MonteCarloSummary, Option<Vec<EpisodeTrace>>) {
    const BATCH: u64 = 1024;
    let batches = episodes.div_ceil(BATCH).max(1);
    let results: Vec<(BatchStats, Option<Vec<EpisodeTrace>>)> =
        map_collect(par, batches as usize, |batch| {
            let lo = batch as u64 * BATCH;
            let hi = (lo + BATCH).min(episodes);
            let mut stats = BatchStats::default();
            let mut traces = collect_traces.then(Vec::new);
            for episode in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(episode);
                let trace = run_episode(cfg, tables, &mut rng);
                stats.absorb(&trace);
                if let Some(ts) = traces.as_mut() {
                    ts.push(trace);
                }
            }
            (stats, traces)
        });

    let mut stats = BatchStats::default();
    let mut all_traces = collect_traces.then(Vec::new);
    for (batch_stats, batch_traces) in results {
        stats.merge(&batch_stats);
        if let (Some(all), Some(batch)) = (all_traces.as_mut(), batch_traces) {
            all.extend(batch);
        }
    }

    let n = stats.episodes as f64;
    let success_rate = stats.successes as f64 / n;
    let success_stderr = (success_rate * (1.0 - success_rate) / n).sqrt();
    let mean_stop_time = stats.sum_tau as f64 / n;
    let tau_var =
        (stats.sum_tau_sq as f64 / n - mean_stop_time * mean_stop_time).max(0.0);
    let stop_time_stderr = (tau_var / n).sqrt();
    let mean_online_ops = stats.sum_ops as f64 / n;
    let mean_reward = success_rate - cfg.c_meas * mean_stop_time;

    let m = cfg.table.hypotheses() as u64;
    let lookup_cost = cfg.grid.len() as u64 * m + 1;
    let per_step_cost = lookup_cost + 1 + m;
    let terminal_cost = lookup_cost;

    // closed-form least squares on integer sums
    let denom = n * stats.sum_tau_sq as f64 - (stats.sum_tau as f64) * (stats.sum_tau as f64);
    let ops_regression = if denom.abs() > 1e-9 {
        let slope =
            (n * stats.sum_tau_ops as f64 - stats.sum_tau as f64 * stats.sum_ops as f64) / denom;
        let intercept = (stats.sum_ops as f64 - slope * stats.sum_tau as f64) / n;
        Some((slope, intercept))
    } else {
        None
    };

    let summary = MonteCarloSummary {
        episodes: stats.episodes,
        seed,
        successes: stats.successes,
        success_rate,
        success_stderr,
        mean_stop_time,
        stop_time_stderr,
        mean_reward,
        mean_online_ops,
        per_step_cost,
        terminal_cost,
        predicted_mean_ops: mean_stop_time * per_step_cost as f64 + terminal_cost as f64,
        ops_regression,
    };
    (summary, all_traces)
}

/// Mean stage-`k` belief across traces that reached stage `k`; with `k = 1`
/// and a policy that measures at the prior, every episode contributes and
/// the average must reproduce the prior.
pub fn mean_belief_at_stage(traces: &[EpisodeTrace], stage: usize) -> Option<(Vec<f64>, u64)> {
    let dim = traces.first()?.beliefs.first()?.dim();
    let mut acc = vec![0.0; dim];
    let mut count = 0u64;
    for trace in traces {
        if let Some(b) = trace.beliefs.get(stage) {
            for (a, w) in acc.iter_mut().zip(b.weights()) {
                *a += w;
            }
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    Some((acc, count))
}
