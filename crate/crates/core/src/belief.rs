//! Belief simplex, Bayesian posterior updates, the regular barycentric
//! grid, and the nearest-neighbor projection it relies on.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counters::CostCounters;
use crate::exec::{map_collect, Parallelism};
use crate::quantum::LikelihoodTable;
use crate::util::{binomial, sum_orderless};

/// Outcomes at or below this probability are treated as impossible: the
/// planner skips them and direct posterior updates refuse them.
pub const PROB_FLOOR: f64 = 1e-12;
/// Tolerance on belief normalization.
pub const EPS_SUM: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("belief weight {value} at index {index} is negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("belief weights sum to {sum}, expected 1")]
    BadSum { sum: f64 },
    #[error("belief needs at least two hypotheses")]
    TooFewHypotheses,
    #[error("outcome {outcome} under action {action} has probability {prob:.3e} at or below the floor")]
    ZeroProbabilityOutcome { action: usize, outcome: usize, prob: f64 },
    #[error("grid would hold {points} points, above the cap of {cap}")]
    SizeOverflow { points: u128, cap: usize },
    #[error("grid needs resolution >= 1 and dimension >= 2")]
    BadGridShape,
}

/// Point on the probability simplex over the hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief {
    weights: Vec<f64>,
}

impl Belief {
    pub fn new(weights: Vec<f64>) -> Result<Self, BeliefError> {
        if weights.len() < 2 {
            return Err(BeliefError::TooFewHypotheses);
        }
        for (index, &value) in weights.iter().enumerate() {
            if value.is_nan() || value < 0.0 {
                return Err(BeliefError::NegativeWeight { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > EPS_SUM {
            return Err(BeliefError::BadSum { sum });
        }
        Ok(Belief { weights })
    }

    pub fn uniform(m: usize) -> Self {
        Belief { weights: vec![1.0 / m as f64; m] }
    }

    /// Two-hypothesis belief `(p, 1-p)`.
    pub fn binary(p: f64) -> Self {
        assert!((0.0..=1.0).contains(&p));
        Belief { weights: vec![p, 1.0 - p] }
    }

    pub fn vertex(m: usize, hypothesis: usize) -> Self {
        let mut weights = vec![0.0; m];
        weights[hypothesis] = 1.0;
        Belief { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Expected reward of stopping now and declaring the most likely
    /// hypothesis: the largest weight.
    pub fn stop_value(&self) -> f64 {
        self.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Most likely hypothesis, smallest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.weights.len() {
            if self.weights[i] > self.weights[best] {
                best = i;
            }
        }
        best
    }

    /// L-infinity distance between two beliefs.
    pub fn linf_distance(&self, other: &Belief) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Probability of each outcome under a measurement action:
/// `Pr(o | b, a) = sum_i b(i) l_i(a, o)`.
pub fn observation_probs(b: &Belief, action: usize, table: &LikelihoodTable) -> Vec<f64> {
    let mut probs = Vec::with_capacity(table.outcomes());
    let mut scratch = Vec::with_capacity(b.dim());
    table.outcome_probs_into(b.weights(), action, &mut probs, &mut scratch);
    probs
}

/// Bayesian posterior after observing `outcome` under `action`.
///
/// The caller must not request updates on impossible outcomes; those return
/// `ZeroProbabilityOutcome`.
pub fn bayes_update(
    b: &Belief,
    action: usize,
    outcome: usize,
    table: &LikelihoodTable,
) -> Result<Belief, BeliefError> {
    let probs = observation_probs(b, action, table);
    let p = probs[outcome];
    if p <= PROB_FLOOR {
        return Err(BeliefError::ZeroProbabilityOutcome { action, outcome, prob: p });
    }
    Ok(posterior_given_prob(b, action, outcome, p, table))
}

/// Posterior for an outcome already known to have probability `prob` above
/// the floor.
pub(crate) fn posterior_given_prob(
    b: &Belief,
    action: usize,
    outcome: usize,
    prob: f64,
    table: &LikelihoodTable,
) -> Belief {
    let ls = table.likelihoods(action, outcome);
    let weights = b.weights().iter().zip(ls).map(|(w, l)| w * l / prob).collect();
    Belief { weights }
}

/// Regular barycentric lattice on the simplex: all integer compositions
/// `(c_1, ..., c_M)` of the resolution `N`, as weights `c_i / N`, ordered
/// lexicographically by their integer coordinates.
#[derive(Debug, Clone)]
pub struct BeliefGrid {
    resolution: u32,
    dim: usize,
    coords: Vec<Vec<u32>>,
    points: Vec<Belief>,
    index: HashMap<Vec<u32>, usize>,
}

impl BeliefGrid {
    pub const DEFAULT_CAP: usize = 5_000_000;

    pub fn build(resolution: u32, dim: usize, cap: usize) -> Result<Self, BeliefError> {
        if resolution < 1 || dim < 2 {
            return Err(BeliefError::BadGridShape);
        }
        let expected = binomial((resolution as u64) + (dim as u64) - 1, (dim as u64) - 1)
            .unwrap_or(u128::MAX);
        if expected > cap as u128 {
            return Err(BeliefError::SizeOverflow { points: expected, cap });
        }
        let mut coords = Vec::with_capacity(expected as usize);
        let mut current = vec![0u32; dim];
        fill_compositions(resolution, 0, &mut current, &mut coords);
        let points = coords
            .iter()
            .map(|c| Belief {
                weights: c.iter().map(|&k| k as f64 / resolution as f64).collect(),
            })
            .collect();
        let index = coords.iter().cloned().zip(0..).collect();
        Ok(BeliefGrid { resolution, dim, coords, points, index })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, id: usize) -> &Belief {
        &self.points[id]
    }

    pub fn points(&self) -> &[Belief] {
        &self.points
    }

    pub fn coords(&self, id: usize) -> &[u32] {
        &self.coords[id]
    }

    pub fn id_of(&self, coords: &[u32]) -> Option<usize> {
        self.index.get(coords).copied()
    }

    /// Grid id whose integer coordinates are this point's coordinates
    /// rearranged by `perm` (new index `perm[i]` receives coordinate `i`).
    pub fn permuted_id(&self, id: usize, perm: &[usize]) -> Option<usize> {
        let c = &self.coords[id];
        let mut out = vec![0u32; self.dim];
        for (i, &p) in perm.iter().enumerate() {
            out[p] = c[i];
        }
        self.id_of(&out)
    }

    /// Ids one lattice move away: one unit shifted between two coordinates.
    pub fn neighbor_ids(&self, id: usize) -> Vec<usize> {
        let c = &self.coords[id];
        let mut out = Vec::new();
        for from in 0..self.dim {
            if c[from] == 0 {
                continue;
            }
            for to in 0..self.dim {
                if to == from {
                    continue;
                }
                let mut n = c.clone();
                n[from] -= 1;
                n[to] += 1;
                if let Some(nid) = self.id_of(&n) {
                    out.push(nid);
                }
            }
        }
        out
    }
}

fn fill_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in 0..=remaining {
        current[pos] = k;
        fill_compositions(remaining - k, pos + 1, current, out);
    }
}

/// Result of projecting a belief onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub grid_id: usize,
    pub distance: f64,
}

fn coord_norm_sq(coords: &[u32]) -> u64 {
    coords.iter().map(|&k| (k as u64) * (k as u64)).sum()
}

/// Nearest grid point in the L-infinity norm by linear scan over the whole
/// grid. Exact distance ties go to the candidate with the larger integer
/// coordinate squared-norm (an exact-integer, relabeling-invariant rule, so
/// permuting hypothesis labels permutes projections consistently); any
/// remaining tie goes to the smallest lexicographic coordinate, the
/// earliest id in scan order. Costs one candidate scan per grid point and
/// `dim` coordinate comparisons per candidate.
pub fn project(b: &Belief, grid: &BeliefGrid, counters: &mut CostCounters) -> Projection {
    counters.projection_calls += 1;
    counters.projection_candidate_scans += grid.len() as u64;
    counters.projection_coord_comparisons += (grid.len() * grid.dim()) as u64;
    let mut best_id = 0usize;
    let mut best_dist = f64::INFINITY;
    let mut best_norm: Option<u64> = None;
    for (id, point) in grid.points.iter().enumerate() {
        let d = b.linf_distance(point);
        if d < best_dist {
            best_dist = d;
            best_id = id;
            best_norm = None;
        } else if d == best_dist {
            let incumbent = *best_norm.get_or_insert_with(|| coord_norm_sq(grid.coords(best_id)));
            let challenger = coord_norm_sq(grid.coords(id));
            if challenger > incumbent {
                best_id = id;
                best_norm = Some(challenger);
            }
        }
    }
    Projection { grid_id: best_id, distance: best_dist }
}

/// O(1) projection for two-hypothesis grids, where the candidates bracket
/// `b(0) * N`. Produces the same id and distance as [`project`], including
/// the tie rule; the planner's fine-grid oracle uses it to avoid the
/// quadratic scan cost.
pub fn project_uniform_1d(b: &Belief, grid: &BeliefGrid, counters: &mut CostCounters) -> Projection {
    debug_assert_eq!(grid.dim(), 2);
    counters.projection_calls += 1;
    let n = grid.resolution();
    let guess = (b.weights()[0] * n as f64).floor() as i64;
    let mut best_id = usize::MAX;
    let mut best_dist = f64::INFINITY;
    let mut best_norm = 0u64;
    for k in (guess - 1)..=(guess + 2) {
        if k < 0 || k as u32 > n {
            continue;
        }
        // grid ids for M = 2 run lexicographically: id = first coordinate
        let id = k as usize;
        counters.projection_candidate_scans += 1;
        counters.projection_coord_comparisons += 2;
        let d = b.linf_distance(grid.point(id));
        let norm = coord_norm_sq(grid.coords(id));
        if d < best_dist || (d == best_dist && norm > best_norm) {
            best_dist = d;
            best_id = id;
            best_norm = norm;
        }
    }
    Projection { grid_id: best_id, distance: best_dist }
}

/// Projection radius of the grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeltaB {
    /// Monte Carlo supremum of the projection distance over uniformly
    /// sampled beliefs; a lower bound on the true radius.
    pub mc_estimate: f64,
    /// Closed value `1 / (2N)`, available for two hypotheses.
    pub exact: Option<f64>,
    pub samples: u64,
    pub seed: u64,
}

impl DeltaB {
    /// The radius used in error budgets: the exact value when known,
    /// otherwise the Monte Carlo estimate.
    pub fn value(&self) -> f64 {
        self.exact.unwrap_or(self.mc_estimate)
    }
}

/// Estimates the projection radius `sup_x ||x - Proj(x)||_inf` by sampling
/// beliefs uniformly (Dirichlet(1,...,1)) and maximizing the projection
/// distance. Deterministic for a fixed seed, independent of thread count.
pub fn estimate_delta_b(grid: &BeliefGrid, samples: u64, seed: u64) -> DeltaB {
    estimate_delta_b_with(grid, samples, seed, Parallelism::default())
}

pub fn estimate_delta_b_with(
    grid: &BeliefGrid,
    samples: u64,
    seed: u64,
    par: Parallelism,
) -> DeltaB {
    const BATCH: u64 = 1024;
    let batches = samples.div_ceil(BATCH);
    let maxima = map_collect(par, batches as usize, |batch| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(batch as u64);
        let lo = batch as u64 * BATCH;
        let hi = (lo + BATCH).min(samples);
        let mut counters = CostCounters::default();
        let mut worst = 0.0f64;
        for _ in lo..hi {
            let b = sample_uniform_belief(grid.dim(), &mut rng);
            let proj = project(&b, grid, &mut counters);
            worst = worst.max(proj.distance);
        }
        worst
    });
    let mc_estimate = maxima.into_iter().fold(0.0, f64::max);
    let exact = (grid.dim() == 2).then(|| 0.5 / grid.resolution() as f64);
    DeltaB { mc_estimate, exact, samples, seed }
}

/// Uniform sample from the simplex via normalized exponentials.
pub fn sample_uniform_belief<R: Rng>(dim: usize, rng: &mut R) -> Belief {
    let mut weights: Vec<f64> = (0..dim)
        .map(|_| -(rng.random::<f64>().max(1e-300)).ln())
        .collect();
    let mut scratch = weights.clone();
    let total = sum_orderless(&mut scratch);
    for w in &mut weights {
        *w /= total;
    }
    Belief { weights }
}
