//! Logit building blocks: linear utility, softmax choice probabilities, the
//! BPR volume-delay curve and the L1 mode-share objective.

use serde::{Deserialize, Serialize};

use crate::mode::ModeShare;

/// Generic taste coefficients shared by all modes (utility per unit).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub cost: f64,
    pub time: f64,
    pub transfers: f64,
}

impl Coefficients {
    pub const ZERO: Coefficients = Coefficients {
        cost: 0.0,
        time: 0.0,
        transfers: 0.0,
    };
}

/// Level-of-service attributes of one mode for one agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeAttributes {
    /// dollars
    pub cost: f64,
    /// minutes
    pub time: f64,
    pub transfers: f64,
}

impl ModeAttributes {
    pub fn is_valid(&self) -> bool {
        self.cost >= 0.0 && self.time > 0.0 && self.transfers >= 0.0
    }
}

/// Systematic utility `intercept + b_cost*cost + b_time*time + b_transfers*transfers`.
#[inline]
pub fn utility(intercept: f64, attrs: &ModeAttributes, coef: &Coefficients) -> f64 {
    intercept + coef.cost * attrs.cost + coef.time * attrs.time + coef.transfers * attrs.transfers
}

/// Overwrites `values` (utilities) with their softmax. Entries equal to
/// `-inf` get probability zero; at least one entry must be finite.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// Multinomial logit choice probabilities `exp(v_k) / sum_j exp(v_j)`.
pub fn choice_probabilities(utilities: &[f64]) -> Vec<f64> {
    let mut p = utilities.to_vec();
    softmax_in_place(&mut p);
    p
}

/// BPR volume-delay: `base_time * (1 + alpha * (volume / capacity)^beta)`.
#[inline]
pub fn congestion_update(
    base_time: f64,
    car_volume: f64,
    capacity: f64,
    alpha: f64,
    beta: f64,
) -> f64 {
    debug_assert!(capacity > 0.0);
    base_time * (1.0 + alpha * (car_volume / capacity).powf(beta))
}

/// Sum of absolute share differences, in percentage points.
pub fn l1_objective(result: &ModeShare, benchmark: &ModeShare) -> f64 {
    result
        .as_array()
        .iter()
        .zip(benchmark.as_array())
        .map(|(a, b)| (a - b).abs())
        .sum()
}
