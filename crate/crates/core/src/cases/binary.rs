//! Two-state discrimination study: `|0>` against
//! `cos(theta)|0> + sin(theta)|1>`, measured by the rotated projective
//! family. The belief reduces to the probability `p` of the first state,
//! so values and gains become curves over `[0, 1]` with closed forms that
//! double as oracles for the generic pipeline.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::belief::{Belief, BeliefGrid, PROB_FLOOR};
use crate::bounds::ScalingRow;
use crate::cases::CaseError;
use crate::exec::{map_collect, Parallelism};
use crate::planner::{plan_with, CounterMode, PlannerConfig};
use crate::quantum::{
    build_likelihood_table, DensityOperator, LikelihoodTable, MeasurementLibrary, ParamFamily,
};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// The rotated projective family repeats after half a turn.
pub const PHI_PERIOD: f64 = PI;

/// Angle whose projective measurement maximizes the one-step value at the
/// uniform prior.
pub fn optimal_phi(theta: f64) -> f64 {
    theta / 2.0 + FRAC_PI_4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinaryScenario {
    pub theta: f64,
    pub phi_grid: Vec<f64>,
    pub c_meas: f64,
    pub horizon: usize,
}

impl BinaryScenario {
    pub fn new(
        theta: f64,
        c_meas: f64,
        horizon: usize,
        library_size: usize,
    ) -> Result<Self, CaseError> {
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return Err(CaseError::BadTheta(theta));
        }
        if library_size == 0 {
            return Err(CaseError::BadScenario("library size must be >= 1".into()));
        }
        Ok(BinaryScenario { theta, phi_grid: uniform_phis(library_size), c_meas, horizon })
    }

    /// Inserts an extra measurement angle, keeping the grid sorted and
    /// deduplicated.
    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi_grid.push(phi.rem_euclid(PHI_PERIOD));
        self.phi_grid.sort_by(f64::total_cmp);
        self.phi_grid.dedup();
        self
    }

    pub fn states(&self) -> Vec<DensityOperator> {
        binary_states(self.theta)
    }

    pub fn library(&self) -> Result<MeasurementLibrary, CaseError> {
        Ok(ParamFamily::BinaryProjective.library(&self.phi_grid)?)
    }

    pub fn likelihood_table(&self) -> Result<LikelihoodTable, CaseError> {
        Ok(build_likelihood_table(&self.states(), &self.library()?)?)
    }

    pub fn grid(&self, resolution: u32, cap: usize) -> Result<BeliefGrid, CaseError> {
        Ok(BeliefGrid::build(resolution, 2, cap)?)
    }
}

pub fn binary_states(theta: f64) -> Vec<DensityOperator> {
    let c = |x: f64| Complex64::new(x, 0.0);
    vec![
        DensityOperator::pure(&[c(1.0), c(0.0)]).expect("basis state"),
        DensityOperator::pure(&[c(theta.cos()), c(theta.sin())]).expect("rotated state"),
    ]
}

/// `count` angles evenly spaced on `[0, pi)`.
pub fn uniform_phis(count: usize) -> Vec<f64> {
    (0..count).map(|k| k as f64 * PHI_PERIOD / count as f64).collect()
}

/// Default curve grid: 2001 evenly spaced points on `[0.001, 0.999]`, so
/// the open-interval endpoints are probed but never evaluated at 0 or 1.
pub fn default_p_grid() -> Vec<f64> {
    let lo = 1e-3;
    let hi = 1.0 - 1e-3;
    let n = 2000usize;
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

/// Closed-form one-step quantities at prior `p` under measurement angle
/// `phi`: the two outcome probabilities, the posteriors of the first
/// hypothesis, the one-step value, and the stopping value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClosedForms {
    pub prob_0: f64,
    pub prob_1: f64,
    pub posterior_0: f64,
    pub posterior_1: f64,
    pub one_step: f64,
    pub stop: f64,
}

pub fn closed_forms(theta: f64, p: f64, phi: f64) -> Result<ClosedForms, CaseError> {
    let c_phi = phi.cos().powi(2);
    let s_phi = phi.sin().powi(2);
    let c_rel = (theta - phi).cos().powi(2);
    let s_rel = (theta - phi).sin().powi(2);
    let q = 1.0 - p;

    let prob_0 = p * c_phi + q * c_rel;
    let prob_1 = p * s_phi + q * s_rel;
    if prob_0 <= PROB_FLOOR || prob_1 <= PROB_FLOOR {
        return Err(CaseError::Belief(crate::belief::BeliefError::ZeroProbabilityOutcome {
            action: 0,
            outcome: if prob_0 <= PROB_FLOOR { 0 } else { 1 },
            prob: prob_0.min(prob_1),
        }));
    }
    let posterior_0 = p * c_phi / prob_0;
    let posterior_1 = p * s_phi / prob_1;
    let one_step = (p * c_phi).max(q * c_rel) + (p * s_phi).max(q * s_rel);
    Ok(ClosedForms { prob_0, prob_1, posterior_0, posterior_1, one_step, stop: p.max(q) })
}

/// One-step value `max{p cos^2, q cos^2} + max{p sin^2, q sin^2}` without
/// the posterior guard; total by construction even when one outcome is
/// impossible.
fn one_step_closed(theta: f64, p: f64, phi: f64) -> f64 {
    let q = 1.0 - p;
    let c_phi = phi.cos().powi(2);
    let s_phi = phi.sin().powi(2);
    let c_rel = (theta - phi).cos().powi(2);
    let s_rel = (theta - phi).sin().powi(2);
    (p * c_phi).max(q * c_rel) + (p * s_phi).max(q * s_rel)
}

fn best_one_step(theta: f64, p: f64, phis: &[f64]) -> f64 {
    phis.iter()
        .map(|&phi| one_step_closed(theta, p, phi))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Gain of the best library measurement over stopping, per grid point,
/// with the region where it beats the measurement cost reported as closed
/// intervals of the sampled grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainCurve {
    pub p: Vec<f64>,
    pub gain: Vec<f64>,
    pub c_meas: f64,
    /// Maximal runs of consecutive grid points with gain above the cost.
    pub measure_region: Vec<(f64, f64)>,
}

pub fn gain_curve(theta: f64, p_grid: &[f64], phis: &[f64], c_meas: f64) -> GainCurve {
    let gain: Vec<f64> = p_grid
        .iter()
        .map(|&p| (best_one_step(theta, p, phis) - p.max(1.0 - p)).max(0.0))
        .collect();
    let mut measure_region = Vec::new();
    let mut run_start: Option<f64> = None;
    for (i, &g) in gain.iter().enumerate() {
        if g > c_meas {
            run_start.get_or_insert(p_grid[i]);
        } else if let Some(start) = run_start.take() {
            measure_region.push((start, p_grid[i - 1]));
        }
    }
    if let Some(start) = run_start {
        measure_region.push((start, *p_grid.last().unwrap()));
    }
    GainCurve { p: p_grid.to_vec(), gain, c_meas, measure_region }
}

/// Dense one-dimensional horizon-two recursion evaluated at exact
/// posteriors (no grid projection): `V2 = S`, `V1` optimizes one
/// measurement against stopping, and `V0` optimizes against the `V1`
/// continuation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BellmanCurves {
    pub p: Vec<f64>,
    pub v2: Vec<f64>,
    pub v1: Vec<f64>,
    pub v0: Vec<f64>,
}

pub fn bellman_h2(
    theta: f64,
    c_meas: f64,
    phis: &[f64],
    p_grid: &[f64],
    par: Parallelism,
) -> BellmanCurves {
    let v1_at = |p: f64| -> f64 {
        let stop = p.max(1.0 - p);
        // Sum_o Pr(o) S(p'_o) telescopes to the simplified one-step value.
        let best = best_one_step(theta, p, phis);
        stop.max(best - c_meas)
    };
    let v0_at = |p: f64| -> f64 {
        let stop = p.max(1.0 - p);
        let mut best = f64::NEG_INFINITY;
        for &phi in phis {
            let q = 1.0 - p;
            let c_phi = phi.cos().powi(2);
            let s_phi = phi.sin().powi(2);
            let c_rel = (theta - phi).cos().powi(2);
            let s_rel = (theta - phi).sin().powi(2);
            let prob_0 = p * c_phi + q * c_rel;
            let prob_1 = p * s_phi + q * s_rel;
            let mut value = -c_meas;
            if prob_0 > PROB_FLOOR {
                value += prob_0 * v1_at(p * c_phi / prob_0);
            }
            if prob_1 > PROB_FLOOR {
                value += prob_1 * v1_at(p * s_phi / prob_1);
            }
            best = best.max(value);
        }
        stop.max(best)
    };

    let v2: Vec<f64> = p_grid.iter().map(|&p| p.max(1.0 - p)).collect();
    let v1: Vec<f64> = map_collect(par, p_grid.len(), |i| v1_at(p_grid[i]));
    let v0: Vec<f64> = map_collect(par, p_grid.len(), |i| v0_at(p_grid[i]));
    BellmanCurves { p: p_grid.to_vec(), v2, v1, v0 }
}

/// Runs the raw-counter planner across grid resolutions and records the
/// instrumented counts with wall time, the input of the scaling fits.
pub fn scaling_sweep(
    theta: f64,
    c_meas: f64,
    horizon: usize,
    library_size: usize,
    grids: &[u32],
    cap: usize,
) -> Result<Vec<ScalingRow>, CaseError> {
    let scenario = BinaryScenario::new(theta, c_meas, horizon, library_size)?;
    let library = scenario.library()?;
    let table = scenario.likelihood_table()?;
    let mut rows = Vec::with_capacity(grids.len());
    for &n in grids {
        let grid = BeliefGrid::build(n, 2, cap)?;
        let cfg = PlannerConfig {
            horizon,
            c_meas,
            grid: &grid,
            library: &library,
            table: &table,
            prior: Belief::binary(0.5),
        };
        let started = std::time::Instant::now();
        let out = plan_with(&cfg, CounterMode::Raw, Parallelism::default())?;
        let wall_secs = started.elapsed().as_secs_f64();
        rows.push(ScalingRow { resolution: n, grid_size: grid.len(), counters: out.counters, wall_secs });
    }
    Ok(rows)
}
