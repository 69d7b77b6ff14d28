//! Trine-state discrimination study: three symmetric equatorial qubit
//! states, measured by a rotated symmetric three-outcome POVM. The belief
//! simplex is a triangle, so one-step values, gains, best orientations,
//! and horizon-two continuation advantages become maps over the
//! barycentric grid.

use serde::{Deserialize, Serialize};

use crate::belief::{observation_probs, posterior_given_prob, Belief, BeliefGrid, PROB_FLOOR};
use crate::cases::CaseError;
use crate::exec::{map_collect, Parallelism};
use crate::planner::{plan_with, CounterMode, PlanOutput, PlannerConfig};
use crate::quantum::{DensityOperator, LikelihoodTable, MeasurementLibrary, ParamFamily};

use std::f64::consts::PI;

/// Orientations repeat (up to outcome relabeling) after a third of a turn.
pub const ALPHA_PERIOD: f64 = 2.0 * PI / 3.0;

/// Likelihood of hypothesis `i` under outcome `o` at orientation `alpha`:
/// `(1 + cos(2 pi k / 3 - alpha)) / 3` with `k = (i - o) mod 3`.
///
/// Computing the phase from `k` alone makes entries with equal `k`
/// bit-identical, so the table is exactly invariant under the cyclic
/// relabeling `(i, o) -> (i+1, o+1)`; the planner's order-independent sums
/// then carry that invariance through to whole value tables.
pub fn closed_form_likelihood(hypothesis: usize, outcome: usize, alpha: f64) -> f64 {
    let k = (3 + hypothesis - outcome) % 3;
    (1.0 + (2.0 * PI * k as f64 / 3.0 - alpha).cos()) / 3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrineScenario {
    pub orientations: usize,
    pub resolution: u32,
    pub c_meas: f64,
    pub horizon: usize,
}

impl TrineScenario {
    pub fn new(
        orientations: usize,
        resolution: u32,
        c_meas: f64,
        horizon: usize,
    ) -> Result<Self, CaseError> {
        if orientations == 0 || resolution == 0 {
            return Err(CaseError::BadScenario(
                "trine scenarios need at least one orientation and resolution >= 1".into(),
            ));
        }
        Ok(TrineScenario { orientations, resolution, c_meas, horizon })
    }

    /// Desk-scale defaults: 24 orientations, a resolution-60 grid,
    /// cost 0.02, horizon 2.
    pub fn default_desk() -> Self {
        TrineScenario { orientations: 24, resolution: 60, c_meas: 0.02, horizon: 2 }
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.orientations)
            .map(|k| k as f64 * ALPHA_PERIOD / self.orientations as f64)
            .collect()
    }

    pub fn states() -> Vec<DensityOperator> {
        (0..3)
            .map(|i| crate::quantum::equatorial_state(2.0 * PI * i as f64 / 3.0))
            .collect()
    }

    pub fn library(&self) -> Result<MeasurementLibrary, CaseError> {
        Ok(ParamFamily::TrineOrientation.library(&self.alphas())?)
    }

    /// Planner table built from the closed-form likelihoods. The matrix
    /// realization agrees with it to 1e-12 entrywise; the closed form is
    /// used so the cyclic symmetry of the ensemble holds exactly in the
    /// exported tables.
    pub fn likelihood_table(&self) -> LikelihoodTable {
        let alphas = self.alphas();
        let (m, a_count, o_count) = (3usize, alphas.len(), 3usize);
        let mut values = vec![0.0; m * a_count * o_count];
        for (a, &alpha) in alphas.iter().enumerate() {
            for o in 0..o_count {
                for i in 0..m {
                    values[(a * o_count + o) * m + i] = closed_form_likelihood(i, o, alpha);
                }
            }
        }
        LikelihoodTable::from_values(m, a_count, o_count, values)
            .expect("closed-form rows are normalized")
    }

    pub fn grid(&self, cap: usize) -> Result<BeliefGrid, CaseError> {
        Ok(BeliefGrid::build(self.resolution, 3, cap)?)
    }
}

/// Planar embedding of the three-hypothesis simplex onto an equilateral
/// triangle: `x = b_2 + b_3 / 2`, `y = sqrt(3)/2 b_3`.
pub fn embed(b: &Belief) -> (f64, f64) {
    let w = b.weights();
    (w[1] + 0.5 * w[2], 3f64.sqrt() / 2.0 * w[2])
}

/// One-step quantities at a grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrineMapRow {
    pub point_id: usize,
    pub weights: Vec<f64>,
    pub x: f64,
    pub y: f64,
    pub stop: f64,
    pub one_step: f64,
    pub gain: f64,
    pub best_action: usize,
    pub best_param: f64,
}

/// Evaluates stopping value, best one-step value, gain, and maximizing
/// orientation at every grid point.
pub fn one_step_maps(
    grid: &BeliefGrid,
    table: &LikelihoodTable,
    params: &[f64],
    par: Parallelism,
) -> Vec<TrineMapRow> {
    map_collect(par, grid.len(), |id| {
        let b = grid.point(id);
        let best = crate::planner::one_step_best(b, table, Some(params))
            .expect("library is nonempty");
        let stop = b.stop_value();
        let (x, y) = embed(b);
        TrineMapRow {
            point_id: id,
            weights: b.weights().to_vec(),
            x,
            y,
            stop,
            one_step: best.value,
            gain: (best.value - stop).max(0.0),
            best_action: best.action,
            best_param: best.param.unwrap_or(f64::NAN),
        }
    })
}

/// One outcome branch of a routing report. Impossible outcomes surface as
/// zero-weight branches with the posterior omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingBranch {
    pub outcome: usize,
    pub probability: f64,
    pub posterior: Option<Belief>,
    pub embedded: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingDiagnostics {
    /// Branch probabilities must sum to 1.
    pub probability_sum: f64,
    /// Largest coordinate residual of `sum_o p_o tau_o` against the start.
    pub reconstruction_residual: f64,
    /// Largest posterior normalization residual across branches.
    pub normalization_residual: f64,
}

/// Outcome-conditioned posteriors under the maximizing orientation at the
/// starting belief.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingReport {
    pub start: Belief,
    pub start_embedded: (f64, f64),
    pub best_action: usize,
    pub best_param: f64,
    pub branches: Vec<RoutingBranch>,
    pub diagnostics: RoutingDiagnostics,
}

pub fn routing(
    start: &Belief,
    table: &LikelihoodTable,
    params: &[f64],
) -> Result<RoutingReport, CaseError> {
    let best = crate::planner::one_step_best(start, table, Some(params))?;
    let probs = observation_probs(start, best.action, table);
    let mut branches = Vec::with_capacity(probs.len());
    for (o, &p) in probs.iter().enumerate() {
        if p > PROB_FLOOR {
            let post = posterior_given_prob(start, best.action, o, p, table);
            let embedded = embed(&post);
            branches.push(RoutingBranch {
                outcome: o,
                probability: p,
                posterior: Some(post),
                embedded: Some(embedded),
            });
        } else {
            branches.push(RoutingBranch { outcome: o, probability: p, posterior: None, embedded: None });
        }
    }

    let probability_sum: f64 = branches.iter().map(|b| b.probability).sum();
    let mut reconstruction_residual = 0.0f64;
    for i in 0..start.dim() {
        let mixed: f64 = branches
            .iter()
            .map(|br| br.posterior.as_ref().map_or(0.0, |post| br.probability * post.weights()[i]))
            .sum();
        reconstruction_residual = reconstruction_residual.max((mixed - start.weights()[i]).abs());
    }
    let normalization_residual = branches
        .iter()
        .filter_map(|br| br.posterior.as_ref())
        .map(|post| (post.weights().iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);

    Ok(RoutingReport {
        start: start.clone(),
        start_embedded: embed(start),
        best_action: best.action,
        best_param: best.param.unwrap_or(f64::NAN),
        branches,
        diagnostics: RoutingDiagnostics {
            probability_sum,
            reconstruction_residual,
            normalization_residual,
        },
    })
}

/// Horizon-two value structure over the grid: the plan output plus the
/// continuation-advantage maps `D1 = V1 - V2` and `D0 = V0 - V1` and the
/// per-stage share of grid points where the policy measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteHorizonMaps {
    pub output: PlanOutput,
    pub d1: Vec<f64>,
    pub d0: Vec<f64>,
    /// Stage-indexed measurement fractions for stages 0 and 1.
    pub measure_fraction: Vec<f64>,
    /// Per-stage orientation index of measuring policy entries.
    pub alpha_index: Vec<Vec<Option<usize>>>,
}

pub fn finite_horizon(
    scenario: &TrineScenario,
    grid: &BeliefGrid,
    library: &MeasurementLibrary,
    table: &LikelihoodTable,
    mode: CounterMode,
    par: Parallelism,
) -> Result<FiniteHorizonMaps, CaseError> {
    if scenario.horizon != 2 {
        return Err(CaseError::BadScenario(
            "the horizon-two maps need horizon = 2".into(),
        ));
    }
    let cfg = PlannerConfig {
        horizon: 2,
        c_meas: scenario.c_meas,
        grid,
        library,
        table,
        prior: Belief::uniform(3),
    };
    let output = plan_with(&cfg, mode, par)?;
    let d1: Vec<f64> =
        (0..grid.len()).map(|id| output.values.value(1, id) - output.values.value(2, id)).collect();
    let d0: Vec<f64> =
        (0..grid.len()).map(|id| output.values.value(0, id) - output.values.value(1, id)).collect();
    let measure_fraction =
        vec![output.policy.measure_fraction(0), output.policy.measure_fraction(1)];
    let alpha_index = (0..2)
        .map(|t| {
            (0..grid.len())
                .map(|id| match output.policy.action(t, id) {
                    crate::planner::Action::Measure(a) => Some(a),
                    crate::planner::Action::Stop(_) => None,
                })
                .collect()
        })
        .collect();
    Ok(FiniteHorizonMaps { output, d1, d0, measure_fraction, alpha_index })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresentativeCase {
    pub label: char,
    pub belief: Belief,
}

/// The five starting beliefs of the routing study: the exact center, a
/// quasi-binary edge point, a near-certainty point, an asymmetric interior
/// point, and the first grid point (in lexicographic id order) adjacent to
/// a change in the best-orientation map.
pub fn representative_cases(
    grid: &BeliefGrid,
    maps: &[TrineMapRow],
) -> Result<Vec<RepresentativeCase>, CaseError> {
    let fixed = [
        ('A', Belief::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])?),
        ('B', Belief::new(vec![0.49, 0.49, 0.02])?),
        ('C', Belief::new(vec![0.90, 0.05, 0.05])?),
        ('D', Belief::new(vec![0.50, 0.30, 0.20])?),
    ];
    let boundary_id = first_orientation_boundary(grid, maps).ok_or_else(|| {
        CaseError::BadScenario("the best-orientation map has no discontinuity".into())
    })?;
    let mut cases: Vec<RepresentativeCase> = fixed
        .into_iter()
        .map(|(label, belief)| RepresentativeCase { label, belief })
        .collect();
    cases.push(RepresentativeCase { label: 'E', belief: grid.point(boundary_id).clone() });
    Ok(cases)
}

/// First grid point, scanning ids in order, with a lattice neighbor whose
/// best orientation differs.
pub fn first_orientation_boundary(grid: &BeliefGrid, maps: &[TrineMapRow]) -> Option<usize> {
    (0..grid.len()).find(|&id| {
        grid.neighbor_ids(id)
            .into_iter()
            .any(|nid| maps[nid].best_action != maps[id].best_action)
    })
}
