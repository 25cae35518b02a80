//! Agent-based multinomial-logit mode-choice simulator.

mod engine;
pub mod estimate;
pub mod logit;
mod scenario;

pub use engine::{run_simulation, SimulationResult, SimulationRun, Simulator};
pub use estimate::{estimate_beta, ChoiceObservation, Estimate, EstimateError};
pub use logit::{
    choice_probabilities, congestion_update, l1_objective, utility, Coefficients, ModeAttributes,
};
pub use scenario::{
    LogNormal, ModeProfile, Scenario, BUNDLED_GROUND_TRUTH, GROUND_TRUTH_BUDGET, GROUND_TRUTH_SEEDS,
};

use crate::mode::ShareError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("budget must be at least one iteration")]
    ZeroBudget,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Share(#[from] ShareError),
}
