//! Maximum-likelihood estimation of a conditional logit model.
//!
//! Parameters are one intercept per alternative except the first (pinned to
//! zero as the reference) plus one coefficient per attribute that varies
//! across alternatives somewhere in the data. The log-likelihood is concave,
//! so a damped Newton iteration converges to the unique maximum when the
//! data are not separated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::logit::ModeAttributes;

/// Gradient norm at which the Newton iteration stops.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 200;
/// Any parameter beyond this magnitude is treated as diverging.
const DIVERGENCE_BOUND: f64 = 50.0;

/// One discrete choice: the chosen alternative and every alternative's
/// attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceObservation {
    pub chosen: usize,
    pub alternatives: Vec<ModeAttributes>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("no observations")]
    Empty,
    #[error("observation {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("alternative {0} is never chosen; its intercept is not identified")]
    NeverChosen(usize),
    #[error("complete separation: estimates diverge (largest |parameter| {0:.3e})")]
    Separation(f64),
    #[error("information matrix is singular; parameters are not identified")]
    Singular,
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
}

const ATTRIBUTE_NAMES: [&str; 3] = ["cost", "time", "transfers"];

fn attribute(a: &ModeAttributes, f: usize) -> f64 {
    match f {
        0 => a.cost,
        1 => a.time,
        _ => a.transfers,
    }
}

/// One estimated parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// intercepts for alternatives `1..J`, then attribute coefficients
    pub parameters: Vec<Parameter>,
    pub alternatives: usize,
    pub log_likelihood: f64,
    /// log-likelihood with every parameter at zero
    pub null_log_likelihood: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub observations: usize,
}

impl Estimate {
    /// Intercept of `alternative`; the reference alternative 0 is exactly 0.
    pub fn intercept(&self, alternative: usize) -> f64 {
        if alternative == 0 {
            0.0
        } else {
            self.parameters[alternative - 1].value
        }
    }

    pub fn intercept_std_error(&self, alternative: usize) -> f64 {
        if alternative == 0 {
            0.0
        } else {
            self.parameters[alternative - 1].std_error
        }
    }

    /// Coefficient by attribute name, if it was identified.
    pub fn coefficient(&self, name: &str) -> Option<&Parameter> {
        self.parameters[self.alternatives - 1..]
            .iter()
            .find(|p| p.name == name)
    }
}

struct Design {
    alternatives: usize,
    attrs: Vec<usize>,
}

impl Design {
    fn dim(&self) -> usize {
        self.alternatives - 1 + self.attrs.len()
    }

    fn row(&self, alt: &ModeAttributes, j: usize, out: &mut [f64]) {
        out.fill(0.0);
        if j > 0 {
            out[j - 1] = 1.0;
        }
        let base = self.alternatives - 1;
        for (i, &f) in self.attrs.iter().enumerate() {
            out[base + i] = attribute(alt, f);
        }
    }
}

struct Evaluation {
    ll: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
    min_chosen_prob: f64,
}

fn evaluate(obs: &[ChoiceObservation], design: &Design, theta: &DVector<f64>, with_derivatives: bool) -> Evaluation {
    let p = design.dim();
    let jn = design.alternatives;
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    let mut min_chosen_prob = 1.0f64;
    let mut rows = vec![vec![0.0; p]; jn];
    let mut v = vec![0.0; jn];
    for o in obs {
        for (j, alt) in o.alternatives.iter().enumerate() {
            design.row(alt, j, &mut rows[j]);
            v[j] = rows[j].iter().zip(theta.iter()).map(|(z, t)| z * t).sum();
        }
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        ll += v[o.chosen] - lse;
        min_chosen_prob = min_chosen_prob.min((v[o.chosen] - lse).exp());
        if !with_derivatives {
            continue;
        }
        let probs: Vec<f64> = v.iter().map(|x| (x - lse).exp()).collect();
        let mut zbar = vec![0.0; p];
        for j in 0..jn {
            for k in 0..p {
                zbar[k] += probs[j] * rows[j][k];
            }
        }
        for k in 0..p {
            grad[k] += rows[o.chosen][k] - zbar[k];
        }
        for j in 0..jn {
            for a in 0..p {
                let da = rows[j][a] - zbar[a];
                if da == 0.0 {
                    continue;
                }
                for b in 0..p {
                    info[(a, b)] += probs[j] * da * (rows[j][b] - zbar[b]);
                }
            }
        }
    }
    Evaluation {
        ll,
        grad,
        info,
        min_chosen_prob,
    }
}

/// Maximizes the logit log-likelihood over intercepts and attribute
/// coefficients. Attributes that never vary across alternatives within an
/// observation carry no information and are left out of the model.
pub fn estimate_beta(observations: &[ChoiceObservation]) -> Result<Estimate, EstimateError> {
    let first = observations.first().ok_or(EstimateError::Empty)?;
    let jn = first.alternatives.len();
    let mut chosen_count = vec![0usize; jn.max(1)];
    for (index, o) in observations.iter().enumerate() {
        if o.alternatives.len() != jn || jn < 2 {
            return Err(EstimateError::Malformed {
                index,
                reason: format!(
                    "expected {} alternatives (at least 2), found {}",
                    jn.max(2),
                    o.alternatives.len()
                ),
            });
        }
        if o.chosen >= jn {
            return Err(EstimateError::Malformed {
                index,
                reason: format!("chosen alternative {} out of range", o.chosen),
            });
        }
        if o
            .alternatives
            .iter()
            .any(|a| !(a.cost.is_finite() && a.time.is_finite() && a.transfers.is_finite()))
        {
            return Err(EstimateError::Malformed {
                index,
                reason: "non-finite attribute".into(),
            });
        }
        chosen_count[o.chosen] += 1;
    }
    if let Some(j) = chosen_count.iter().position(|&c| c == 0) {
        return Err(EstimateError::NeverChosen(j));
    }

    let attrs: Vec<usize> = (0..3)
        .filter(|&f| {
            observations.iter().any(|o| {
                let x0 = attribute(&o.alternatives[0], f);
                o.alternatives.iter().any(|a| attribute(a, f) != x0)
            })
        })
        .collect();
    let design = Design { alternatives: jn, attrs };
    let p = design.dim();

    let mut theta = DVector::zeros(p);
    let null_ll = evaluate(observations, &design, &theta, false).ll;
    let mut eval = evaluate(observations, &design, &theta, true);
    let mut iterations = 0;
    while eval.grad.norm() >= GRADIENT_TOLERANCE {
        if iterations >= MAX_ITERATIONS {
            let largest = theta.amax();
            if largest > DIVERGENCE_BOUND || eval.min_chosen_prob > 1.0 - 1e-9 {
                return Err(EstimateError::Separation(largest));
            }
            return Err(EstimateError::NotConverged {
                iterations,
                gradient_norm: eval.grad.norm(),
            });
        }
        iterations += 1;
        let chol = eval.info.clone().cholesky().ok_or_else(|| {
            if theta.amax() > DIVERGENCE_BOUND {
                EstimateError::Separation(theta.amax())
            } else {
                EstimateError::Singular
            }
        })?;
        let direction = chol.solve(&eval.grad);
        let mut step = 1.0;
        let next = loop {
            let candidate = &theta + &direction * step;
            let trial = evaluate(observations, &design, &candidate, false);
            if trial.ll >= eval.ll - 1e-12 * eval.ll.abs() || step < 1e-10 {
                break candidate;
            }
            step *= 0.5;
        };
        theta = next;
        if theta.amax() > DIVERGENCE_BOUND {
            return Err(EstimateError::Separation(theta.amax()));
        }
        eval = evaluate(observations, &design, &theta, true);
    }
    if eval.min_chosen_prob > 1.0 - 1e-9 {
        return Err(EstimateError::Separation(theta.amax()));
    }

    let covariance = eval
        .info
        .clone()
        .try_inverse()
        .ok_or(EstimateError::Singular)?;
    let names = (1..jn)
        .map(|j| format!("intercept[{j}]"))
        .chain(design.attrs.iter().map(|&f| ATTRIBUTE_NAMES[f].to_string()));
    let parameters = names
        .enumerate()
        .map(|(i, name)| Parameter {
            name,
            value: theta[i],
            std_error: covariance[(i, i)].max(0.0).sqrt(),
        })
        .collect();
    Ok(Estimate {
        parameters,
        alternatives: jn,
        log_likelihood: eval.ll,
        null_log_likelihood: null_ll,
        gradient_norm: eval.grad.norm(),
        iterations,
        observations: observations.len(),
    })
}
