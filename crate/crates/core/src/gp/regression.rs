//! Gaussian-process regression with an anisotropic squared-exponential
//! kernel and fixed hyperparameters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::GpError;

/// Fixed kernel and prior settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// sigma_f^2
    pub signal_variance: f64,
    /// one length scale per input dimension
    pub length_scales: Vec<f64>,
    /// sigma_n^2, added to the diagonal of the training covariance
    pub noise_variance: f64,
    /// constant prior mean mu_0
    pub prior_mean: f64,
}

impl KernelParams {
    pub fn isotropic(dim: usize, signal_variance: f64, length_scale: f64, noise_variance: f64) -> Self {
        KernelParams {
            signal_variance,
            length_scales: vec![length_scale; dim],
            noise_variance,
            prior_mean: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// `k(a, b) = sigma_f^2 exp(-1/2 sum_k (a_k - b_k)^2 / l_k^2)`
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }

    /// Gradient of `k(a, b)` with respect to `a`.
    pub fn kernel_grad(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let k = self.kernel(a, b);
        for (j, o) in out.iter_mut().enumerate() {
            let l = self.length_scales[j];
            *o = -k * (a[j] - b[j]) / (l * l);
        }
    }
}

/// A fitted GP posterior. Immutable; refitting builds a new state.
#[derive(Clone, Debug)]
pub struct GpState {
    params: KernelParams,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    /// (K + sigma_n^2 I)^-1 (y - mu_0)
    alpha: DVector<f64>,
}

/// Fits the posterior to `(point, loss)` observations.
pub fn gp_fit(data: &[(Vec<f64>, f64)], params: KernelParams) -> Result<GpState, GpError> {
    if data.is_empty() {
        return Err(GpError::NoData);
    }
    if !(params.noise_variance > 0.0) {
        return Err(GpError::NonPositiveJitter(params.noise_variance));
    }
    let d = params.dim();
    if let Some((p, _)) = data.iter().find(|(p, _)| p.len() != d) {
        return Err(GpError::DimensionMismatch {
            expected: d,
            found: p.len(),
        });
    }
    if params.length_scales.iter().any(|l| !(*l > 0.0)) || !(params.signal_variance > 0.0) {
        return Err(GpError::InvalidHyperparameters);
    }
    let n = data.len();
    let x: Vec<Vec<f64>> = data.iter().map(|(p, _)| p.clone()).collect();
    let y: Vec<f64> = data.iter().map(|(_, v)| *v).collect();
    let mut k = DMatrix::from_fn(n, n, |i, j| params.kernel(&x[i], &x[j]));
    for i in 0..n {
        k[(i, i)] += params.noise_variance;
    }
    let chol = match k.clone().cholesky() {
        Some(c) => c,
        None => {
            let min_eigenvalue = k.symmetric_eigenvalues().min();
            return Err(GpError::NotPositiveDefinite { min_eigenvalue });
        }
    };
    let resid = DVector::from_iterator(n, y.iter().map(|v| v - params.prior_mean));
    let alpha = chol.solve(&resid);
    Ok(GpState {
        params,
        x,
        y,
        chol,
        alpha,
    })
}

impl GpState {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// `k(X, x)`
    pub fn cross_covariance(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.params.kernel(x, xi)))
    }

    /// `(K + sigma_n^2 I)^-1 v`
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// Posterior mean at `x`.
    pub fn mean(&self, x: &[f64]) -> f64 {
        self.params.prior_mean + self.cross_covariance(x).dot(&self.alpha)
    }

    /// Posterior mean and standard deviation of the latent function at `x`.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let ks = self.cross_covariance(x);
        let mean = self.params.prior_mean + ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("non-singular factor");
        let var = self.params.kernel(x, x) - v.dot(&v);
        (mean, var.max(0.0).sqrt())
    }

    /// Joint posterior mean and covariance at several points.
    pub fn joint_posterior(&self, points: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let q = points.len();
        let l = self.chol.l();
        let vs: Vec<DVector<f64>> = points
            .iter()
            .map(|p| {
                l.solve_lower_triangular(&self.cross_covariance(p))
                    .expect("non-singular factor")
            })
            .collect();
        let mean = DVector::from_iterator(q, points.iter().map(|p| self.mean(p)));
        let cov = DMatrix::from_fn(q, q, |i, j| {
            self.params.kernel(&points[i], &points[j]) - vs[i].dot(&vs[j])
        });
        (mean, cov)
    }

    /// Gradients of the posterior mean and standard deviation at `x`.
    pub fn posterior_gradient(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let n = self.len();
        let ks = self.cross_covariance(x);
        let w = self.solve(&ks);
        let (_, std) = self.posterior(x);
        let mut dmean = vec![0.0; d];
        let mut dvar = vec![0.0; d];
        let mut g = vec![0.0; d];
        for i in 0..n {
            self.params.kernel_grad(x, &self.x[i], &mut g);
            for j in 0..d {
                dmean[j] += self.alpha[i] * g[j];
                dvar[j] -= 2.0 * w[i] * g[j];
            }
        }
        let dstd = if std > 0.0 {
            dvar.iter().map(|v| v / (2.0 * std)).collect()
        } else {
            vec![0.0; d]
        };
        (dmean, dstd)
    }
}

/// Free-function form of [`GpState::posterior`].
pub fn gp_posterior(state: &GpState, x: &[f64]) -> (f64, f64) {
    state.posterior(x)
}
