//! The two worked study scenarios as reproducible generators: the binary
//! ensemble with its closed forms, and the trine ensemble with its simplex
//! maps, posterior routing, and horizon-two structure.

pub mod binary;
pub mod trine;

use thiserror::Error;

use crate::belief::BeliefError;
use crate::planner::PlanError;
use crate::quantum::QuantumError;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("theta must lie strictly inside (0, pi/2), got {0}")]
    BadTheta(f64),
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}
