//! Sequential quantum state discrimination as a finite-horizon decision
//! process over the belief simplex.
//!
//! The crate is organized around the offline/online split of the problem:
//!
//! - [`quantum`]: density operators, POVMs, parameterized measurement
//!   families, and the Born-rule likelihood table.
//! - [`belief`]: the belief simplex, Bayesian updates, the regular
//!   barycentric grid, and nearest-neighbor projection.
//! - [`planner`]: one-step values and the projected backward induction that
//!   produces value and policy tables.
//! - [`bounds`]: regularity constants, discretization error budgets, and
//!   instrumented complexity reports.
//! - [`executor`]: online episode simulation with stopping times and
//!   reproducible Monte Carlo summaries.
//! - [`cases`]: the binary and trine study scenarios with their closed
//!   forms, maps, and routing reports.
//!
//! All planning and simulation entry points are deterministic: given the
//! same configuration and seed they produce bit-identical tables and
//! summaries, independent of thread count (see [`exec::Parallelism`]).

pub mod belief;
pub mod bounds;
pub mod cases;
pub mod counters;
pub mod exec;
pub mod executor;
pub mod export;
pub mod planner;
pub mod quantum;
pub mod util;

pub use belief::{Belief, BeliefGrid, DeltaB, Projection};
pub use counters::CostCounters;
pub use exec::Parallelism;
pub use planner::{Action, CounterMode, PlanOutput, PlannerConfig, PolicyTable, ValueTable};
pub use quantum::{ComplexMatrix, DensityOperator, LikelihoodTable, MeasurementLibrary, Povm};
