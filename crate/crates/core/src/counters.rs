//! Instrumented operation counts for the offline planner.
//!
//! The fields mirror the atomic-cost taxonomy of one Bellman update:
//! stopping-value evaluations, observation probabilities, posterior
//! constructions, grid projections (with their candidate scans and
//! per-coordinate comparisons), value lookups, expectation aggregations,
//! and action-maximization comparisons. Counts are plain integers so that
//! parallel accumulation is order-independent.

use serde::{Deserialize, Serialize};

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub stop_evals: u64,
    pub obs_evals: u64,
    pub posterior_evals: u64,
    pub projection_calls: u64,
    /// Grid candidates inspected across all projection calls; a linear scan
    /// contributes the full grid size per call.
    pub projection_candidate_scans: u64,
    /// Per-coordinate distance comparisons across all projection calls.
    pub projection_coord_comparisons: u64,
    pub value_lookups: u64,
    pub aggregations: u64,
    pub actmax_comparisons: u64,
    /// Outcomes skipped because their probability fell below the floor.
    pub zero_prob_skips: u64,
}

impl CostCounters {
    pub fn merge(&mut self, other: &CostCounters) {
        self.stop_evals += other.stop_evals;
        self.obs_evals += other.obs_evals;
        self.posterior_evals += other.posterior_evals;
        self.projection_calls += other.projection_calls;
        self.projection_candidate_scans += other.projection_candidate_scans;
        self.projection_coord_comparisons += other.projection_coord_comparisons;
        self.value_lookups += other.value_lookups;
        self.aggregations += other.aggregations;
        self.actmax_comparisons += other.actmax_comparisons;
        self.zero_prob_skips += other.zero_prob_skips;
    }

    pub fn is_empty(&self) -> bool {
        *self == CostCounters::default()
    }
}
