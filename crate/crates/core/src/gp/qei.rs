//! Batch expected improvement (q-EI) by Monte Carlo over the joint
//! posterior, `Y = m + C Z`, and its pathwise gradient.
//!
//! The gradient of one draw is `-d/dx [m_j + (C(x) Z)_j]` at the batch
//! member `j` attaining the minimum, or zero when the draw does not improve
//! on the incumbent. `dC` comes from forward-mode differentiation of the
//! Cholesky recurrence, which does not depend on `Z` and is computed once
//! per batch.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::regression::GpState;
use super::GpError;
use crate::par::{self, ExecPolicy};
use crate::rng;

/// Relative diagonal jitter added to the joint posterior covariance.
pub const JOINT_JITTER: f64 = 1e-10;

/// Samples per independent random stream.
const MC_CHUNK: usize = 2048;

/// `q >= 1` candidate points evaluated simultaneously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QBatch {
    points: Vec<Vec<f64>>,
}

impl QBatch {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, GpError> {
        if points.is_empty() {
            return Err(GpError::EmptyBatch);
        }
        let d = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(GpError::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
        Ok(QBatch { points })
    }

    pub fn q(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > 0.0) {
            return None;
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut t = a[(i, j)];
            for k in 0..j {
                t -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = t / ljj;
        }
    }
    Some(l)
}

/// Directional derivative of the Cholesky factor `l` of `A` along the
/// symmetric perturbation `da`.
pub fn cholesky_derivative(l: &DMatrix<f64>, da: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut dl = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut ds = da[(j, j)];
        for k in 0..j {
            ds -= 2.0 * l[(j, k)] * dl[(j, k)];
        }
        let ljj = l[(j, j)];
        let dljj = ds / (2.0 * ljj);
        dl[(j, j)] = dljj;
        for i in j + 1..n {
            let mut dt = da[(i, j)];
            for k in 0..j {
                dt -= dl[(i, k)] * l[(j, k)] + l[(i, k)] * dl[(j, k)];
            }
            dl[(i, j)] = (dt - l[(i, j)] * dljj) / ljj;
        }
    }
    dl
}

/// Joint posterior of one batch with everything needed to evaluate the
/// improvement of a draw and its gradient.
pub struct QeiContext {
    q: usize,
    d: usize,
    f_star: f64,
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    /// `d m_p / d x_{p,c}`, indexed `[p * d + c]`
    dmean: Vec<f64>,
    /// `d C / d x_{p,c}`, indexed `[p * d + c]`
    dchol: Vec<DMatrix<f64>>,
}

impl QeiContext {
    pub fn new(state: &GpState, batch: &QBatch, f_star: f64) -> Result<Self, GpError> {
        Self::build(state, batch, f_star, true)
    }

    /// Context without derivative information, for value-only estimates.
    pub fn value_only(state: &GpState, batch: &QBatch, f_star: f64) -> Result<Self, GpError> {
        Self::build(state, batch, f_star, false)
    }

    fn build(state: &GpState, batch: &QBatch, f_star: f64, derivatives: bool) -> Result<Self, GpError> {
        let d = state.dim();
        if batch.points[0].len() != d {
            return Err(GpError::DimensionMismatch {
                expected: d,
                found: batch.points[0].len(),
            });
        }
        let q = batch.q();
        let params = state.params();
        let (mean, mut cov) = state.joint_posterior(&batch.points);
        let jitter = JOINT_JITTER * params.signal_variance;
        for i in 0..q {
            cov[(i, i)] += jitter;
        }
        let chol = cholesky_lower(&cov).ok_or_else(|| GpError::NotPositiveDefinite {
            min_eigenvalue: cov.clone().symmetric_eigenvalues().min(),
        })?;
        if !derivatives {
            return Ok(QeiContext {
                q,
                d,
                f_star,
                mean,
                chol,
                dmean: Vec::new(),
                dchol: Vec::new(),
            });
        }

        let n = state.len();
        let x = state.inputs();
        // w_j = K^-1 k(X, x_j)
        let w: Vec<DVector<f64>> = batch
            .points
            .iter()
            .map(|p| state.solve(&state.cross_covariance(p)))
            .collect();
        let alpha = state.solve(&DVector::from_iterator(
            n,
            state.targets().iter().map(|y| y - params.prior_mean),
        ));

        let mut dmean = vec![0.0; q * d];
        let mut dchol = Vec::with_capacity(q * d);
        let mut g = vec![0.0; d];
        let mut kb = vec![0.0; d];
        for p in 0..q {
            let xp = &batch.points[p];
            // G[i][c] = d k(x_p, X_i) / d x_{p,c}
            let grads: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    params.kernel_grad(xp, &x[i], &mut g);
                    g.clone()
                })
                .collect();
            for c in 0..d {
                dmean[p * d + c] = (0..n).map(|i| grads[i][c] * alpha[i]).sum();
                let mut da = DMatrix::zeros(q, q);
                for j in 0..q {
                    let gw: f64 = (0..n).map(|i| grads[i][c] * w[j][i]).sum();
                    if j == p {
                        da[(p, p)] += -2.0 * gw;
                    } else {
                        params.kernel_grad(xp, &batch.points[j], &mut kb);
                        let v = kb[c] - gw;
                        da[(p, j)] += v;
                        da[(j, p)] += v;
                    }
                }
                dchol.push(cholesky_derivative(&chol, &da));
            }
        }
        Ok(QeiContext {
            q,
            d,
            f_star,
            mean,
            chol,
            dmean,
            dchol,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `argmin_j (m + C z)_j` (lowest index on ties) and the minimum.
    fn minimum(&self, z: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.q {
            let mut y = self.mean[j];
            for l in 0..=j {
                y += self.chol[(j, l)] * z[l];
            }
            if y < best.1 {
                best = (j, y);
            }
        }
        best
    }

    /// `(f_star - min(m + C z))+` for one standard normal draw.
    pub fn improvement(&self, z: &[f64]) -> f64 {
        (self.f_star - self.minimum(z).1).max(0.0)
    }

    /// Gradient of [`Self::improvement`] with respect to all `q * d`
    /// coordinates, point-major.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        assert!(!self.dchol.is_empty(), "context built without derivatives");
        let mut out = vec![0.0; self.q * self.d];
        let (j, y) = self.minimum(z);
        if self.f_star - y <= 0.0 {
            return out;
        }
        for (idx, o) in out.iter_mut().enumerate() {
            let p = idx / self.d;
            let dm = if p == j { self.dmean[idx] } else { 0.0 };
            let dl = &self.dchol[idx];
            let dcz: f64 = (0..=j).map(|l| dl[(j, l)] * z[l]).sum();
            *o = -(dm + dcz);
        }
        out
    }

    /// Monte Carlo estimate of q-EI with draws from the streams of `seed`.
    pub fn estimate(&self, seed: u64, n_samples: usize, policy: ExecPolicy) -> McEstimate {
        let chunks = n_samples.div_ceil(MC_CHUNK);
        let partial = par::map_range(chunks, policy, |c| {
            let mut rng = rng::stream(seed, &[c as u64]);
            let count = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut z = vec![0.0; self.q];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let imp = self.improvement(&z);
                s += imp;
                s2 += imp * imp;
            }
            (s, s2)
        });
        let (s, s2) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = n_samples as f64;
        let mean = s / n;
        let var = if n_samples > 1 {
            ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            value: mean,
            std_error: (var / n).sqrt(),
        }
    }

    /// Average pathwise gradient over `n_samples` draws from `seed`'s streams
    /// (the same draws [`Self::estimate`] uses for that seed).
    pub fn mean_gradient(&self, seed: u64, n_samples: usize, policy: ExecPolicy) -> Vec<f64> {
        let chunks = n_samples.div_ceil(MC_CHUNK);
        let partial = par::map_range(chunks, policy, |c| {
            let mut rng = rng::stream(seed, &[c as u64]);
            let count = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut z = vec![0.0; self.q];
            let mut acc = vec![0.0; self.q * self.d];
            for _ in 0..count {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                for (a, g) in acc.iter_mut().zip(self.gradient(&z)) {
                    *a += g;
                }
            }
            acc
        });
        let mut total = vec![0.0; self.q * self.d];
        for p in &partial {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total.iter().map(|t| t / n_samples as f64).collect()
    }
}

/// Monte Carlo q-EI of `batch` against incumbent `f_star`.
pub fn qei_monte_carlo<R: Rng + ?Sized>(
    state: &GpState,
    batch: &QBatch,
    f_star: f64,
    n_samples: usize,
    rng: &mut R,
    policy: ExecPolicy,
) -> Result<McEstimate, GpError> {
    let ctx = QeiContext::value_only(state, batch, f_star)?;
    Ok(ctx.estimate(rng.random(), n_samples.max(1), policy))
}

/// Pathwise gradient of the q-EI integrand for one fixed draw `z`.
pub fn qei_gradient(state: &GpState, batch: &QBatch, f_star: f64, z: &[f64]) -> Result<Vec<f64>, GpError> {
    Ok(QeiContext::new(state, batch, f_star)?.gradient(z))
}
