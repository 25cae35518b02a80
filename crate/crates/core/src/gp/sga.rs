//! Multi-start stochastic gradient ascent on q-EI.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::qei::{QBatch, QeiContext};
use super::regression::GpState;
use super::GpError;
use crate::par::{self, ExecPolicy};
use crate::rng;
use crate::space::Interval;

/// Ascent settings. The step size at step `t` is `step_scale / (step_offset + t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgaParams {
    pub restarts: usize,
    pub steps: usize,
    pub step_scale: f64,
    pub step_offset: f64,
    /// draws averaged per gradient estimate
    pub gradient_samples: usize,
    /// draws used to rank the final batches
    pub eval_samples: usize,
}

impl Default for SgaParams {
    fn default() -> Self {
        SgaParams {
            restarts: 8,
            steps: 40,
            step_scale: 1.0,
            step_offset: 10.0,
            gradient_samples: 128,
            eval_samples: 4096,
        }
    }
}

impl SgaParams {
    pub fn step_size(&self, t: usize) -> f64 {
        self.step_scale / (self.step_offset + t as f64)
    }
}

const INIT_STREAM: u64 = 0x494e4954;
const EVAL_STREAM: u64 = 0x4556414c;

fn ascend(
    state: &GpState,
    q: usize,
    bounds: &[Interval],
    f_star: f64,
    params: &SgaParams,
    seed: u64,
    restart: u64,
) -> Vec<Vec<f64>> {
    let d = bounds.len();
    let mut init = rng::stream(seed, &[INIT_STREAM, restart]);
    let mut points: Vec<Vec<f64>> = (0..q)
        .map(|_| {
            bounds
                .iter()
                .map(|b| b.clamp(b.lower + init.random::<f64>() * b.width()))
                .collect()
        })
        .collect();
    for t in 0..params.steps {
        let batch = QBatch::new(points.clone()).expect("non-empty batch");
        let Ok(ctx) = QeiContext::new(state, &batch, f_star) else {
            break;
        };
        let grad = ctx.mean_gradient(
            rng::derive(seed, &[restart, t as u64]),
            params.gradient_samples.max(1),
            ExecPolicy::Sequential,
        );
        let alpha = params.step_size(t);
        for (p, point) in points.iter_mut().enumerate() {
            for (c, x) in point.iter_mut().enumerate() {
                *x = bounds[c].clamp(*x + alpha * grad[p * d + c]);
            }
        }
    }
    points
}

/// Runs `restarts` independent ascents from random batches of `q` points and
/// returns the final batch with the highest Monte Carlo q-EI (first one on
/// ties). All restarts are ranked on the same draws.
pub fn multistart_sga<R: Rng + ?Sized>(
    state: &GpState,
    q: usize,
    bounds: &[Interval],
    f_star: f64,
    params: &SgaParams,
    rng: &mut R,
    policy: ExecPolicy,
) -> Result<QBatch, GpError> {
    if q == 0 {
        return Err(GpError::EmptyBatch);
    }
    if bounds.len() != state.dim() {
        return Err(GpError::DimensionMismatch {
            expected: state.dim(),
            found: bounds.len(),
        });
    }
    let seed: u64 = rng.random();
    let restarts = params.restarts.max(1);
    let eval_seed = rng::derive(seed, &[EVAL_STREAM]);
    let finals = par::map_range(restarts, policy, |r| {
        let points = ascend(state, q, bounds, f_star, params, seed, r as u64);
        let batch = QBatch::new(points).expect("non-empty batch");
        let value = QeiContext::value_only(state, &batch, f_star)
            .map(|ctx| ctx.estimate(eval_seed, params.eval_samples.max(1), ExecPolicy::Sequential).value)
            .unwrap_or(f64::NEG_INFINITY);
        (batch, value)
    });
    let mut best: Option<(QBatch, f64)> = None;
    for (batch, value) in finals {
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((batch, value));
        }
    }
    Ok(best.expect("at least one restart").0)
}
