//! Tree-structured Parzen estimator: bounded product-Gaussian kernel
//! densities over good and bad configurations, and proposals that maximize
//! the density ratio `l(x) / g(x)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::gp::normal;
use crate::space::Interval;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TpeError {
    #[error("model not ready: {have} observations, {need} required")]
    NotReady { have: usize, need: usize },
    #[error("a density estimate needs at least one point")]
    NoPoints,
    #[error("point has {found} coordinates, space has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coordinate {dim} = {value} lies outside [{lower}, {upper}]")]
    OutOfBounds {
        dim: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("quantile fraction must lie in (0, 1), got {0}")]
    BadGamma(f64),
}

/// Model settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeParams {
    /// fraction of observations treated as good
    pub gamma: f64,
    pub n_candidates: usize,
    /// bandwidth floor as a fraction of each dimension's range
    pub h_min: f64,
    /// minimum points on each side of the split
    pub min_points: usize,
}

impl Default for TpeParams {
    fn default() -> Self {
        TpeParams {
            gamma: 0.15,
            n_candidates: 64,
            h_min: 1e-3,
            min_points: 9,
        }
    }
}

/// Good and bad halves of one budget's observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub good: Vec<(Vec<f64>, f64)>,
    pub bad: Vec<(Vec<f64>, f64)>,
    /// loss of the best bad observation
    pub threshold: f64,
}

/// Sorts by loss (stable) and puts the best `max(min_points, ceil(gamma n))`
/// observations in the good set, capped so the bad set keeps `min_points`.
pub fn split_observations(
    trials: &[(Vec<f64>, f64)],
    gamma: f64,
    min_points: usize,
) -> Result<Split, TpeError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(TpeError::BadGamma(gamma));
    }
    let min_points = min_points.max(1);
    let n = trials.len();
    if n < 2 * min_points {
        return Err(TpeError::NotReady {
            have: n,
            need: 2 * min_points,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| trials[a].1.total_cmp(&trials[b].1));
    let n_good = min_points
        .max((gamma * n as f64).ceil() as usize)
        .min(n - min_points);
    let good = order[..n_good].iter().map(|&i| trials[i].clone()).collect();
    let bad: Vec<_> = order[n_good..].iter().map(|&i| trials[i].clone()).collect();
    Ok(Split {
        threshold: bad[0].1,
        good,
        bad,
    })
}

/// Product of truncated 1-D Gaussians, one bandwidth per dimension, averaged
/// over the support points. Integrates to one over the bounding box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    support: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
    bounds: Vec<Interval>,
    /// ln of each support point's truncated kernel mass, per dimension
    log_mass: Vec<Vec<f64>>,
}

/// Fits a bounded KDE with Scott bandwidths `sd_k * n^(-1/(d+4))`, floored at
/// `h_min * (upper_k - lower_k)`.
pub fn fit_kde(points: &[Vec<f64>], bounds: &[Interval], h_min: f64) -> Result<Kde, TpeError> {
    if points.is_empty() {
        return Err(TpeError::NoPoints);
    }
    let d = bounds.len();
    for p in points {
        check_point(p, bounds)?;
    }
    let n = points.len();
    let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
    let bandwidths: Vec<f64> = (0..d)
        .map(|k| {
            let width = bounds[k].width();
            if width <= 0.0 {
                // point dimension: contributes a constant factor
                return 1.0;
            }
            let sd = if n > 1 {
                let mean = points.iter().map(|p| p[k]).sum::<f64>() / n as f64;
                let var = points.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                var.sqrt()
            } else {
                0.0
            };
            (sd * factor).max(h_min * width).max(f64::MIN_POSITIVE)
        })
        .collect();
    let log_mass = points
        .iter()
        .map(|p| {
            (0..d)
                .map(|k| {
                    let b = bounds[k];
                    if b.width() <= 0.0 {
                        return 0.0;
                    }
                    let h = bandwidths[k];
                    let mass = normal::cdf((b.upper - p[k]) / h) - normal::cdf((b.lower - p[k]) / h);
                    mass.max(f64::MIN_POSITIVE).ln()
                })
                .collect()
        })
        .collect();
    Ok(Kde {
        support: points.to_vec(),
        bandwidths,
        bounds: bounds.to_vec(),
        log_mass,
    })
}

fn check_point(x: &[f64], bounds: &[Interval]) -> Result<(), TpeError> {
    if x.len() != bounds.len() {
        return Err(TpeError::DimensionMismatch {
            expected: bounds.len(),
            found: x.len(),
        });
    }
    for (dim, (v, b)) in x.iter().zip(bounds).enumerate() {
        if !b.contains(*v) {
            return Err(TpeError::OutOfBounds {
                dim,
                value: *v,
                lower: b.lower,
                upper: b.upper,
            });
        }
    }
    Ok(())
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl Kde {
    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    /// Natural log of the density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64, TpeError> {
        check_point(x, &self.bounds)?;
        let terms: Vec<f64> = self
            .support
            .iter()
            .zip(&self.log_mass)
            .map(|(s, lm)| {
                let mut acc = 0.0;
                for k in 0..x.len() {
                    if self.bounds[k].width() <= 0.0 {
                        continue;
                    }
                    let h = self.bandwidths[k];
                    let z = (x[k] - s[k]) / h;
                    acc += -0.5 * z * z - LN_SQRT_2PI - h.ln() - lm[k];
                }
                acc
            })
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        Ok(max + (sum / self.support.len() as f64).ln())
    }

    /// Density at `x`; strictly positive inside the bounds.
    pub fn density(&self, x: &[f64]) -> Result<f64, TpeError> {
        self.log_density(x).map(f64::exp)
    }

    /// Picks a support point uniformly, perturbs every dimension by its
    /// kernel and clips to the bounds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let i = rng.random_range(0..self.support.len());
        self.support[i]
            .iter()
            .zip(&self.bandwidths)
            .zip(&self.bounds)
            .map(|((s, h), b)| {
                if b.width() <= 0.0 {
                    return b.lower;
                }
                let z: f64 = rng.sample(StandardNormal);
                b.clamp(s + h * z)
            })
            .collect()
    }
}

/// Densities of the good (`l`) and bad (`g`) configurations at one budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdePair {
    pub good: Kde,
    pub bad: Kde,
    pub budget: u64,
    pub gamma: f64,
}

impl KdePair {
    /// Splits one budget's `(point, loss)` observations and fits both
    /// densities.
    pub fn fit(
        observations: &[(Vec<f64>, f64)],
        bounds: &[Interval],
        budget: u64,
        params: &TpeParams,
    ) -> Result<Self, TpeError> {
        let split = split_observations(observations, params.gamma, params.min_points)?;
        let good: Vec<_> = split.good.into_iter().map(|(p, _)| p).collect();
        let bad: Vec<_> = split.bad.into_iter().map(|(p, _)| p).collect();
        Ok(KdePair {
            good: fit_kde(&good, bounds, params.h_min)?,
            bad: fit_kde(&bad, bounds, params.h_min)?,
            budget,
            gamma: params.gamma,
        })
    }

    /// `ln l(x) - ln g(x)`.
    pub fn log_ratio(&self, x: &[f64]) -> Result<f64, TpeError> {
        Ok(self.good.log_density(x)? - self.bad.log_density(x)?)
    }
}

/// Draws `n_candidates` points from `l` and returns the one maximizing
/// `l / g` (the first one on ties).
pub fn propose<R: Rng + ?Sized>(pair: &KdePair, n_candidates: usize, rng: &mut R) -> Vec<f64> {
    let candidates: Vec<Vec<f64>> = (0..n_candidates.max(1)).map(|_| pair.good.sample(rng)).collect();
    select_by_ratio(pair, candidates)
}

/// Returns the candidate with the largest `l / g`.
pub fn select_by_ratio(pair: &KdePair, candidates: Vec<Vec<f64>>) -> Vec<f64> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for c in candidates {
        let score = pair.log_ratio(&c).unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((c, score));
        }
    }
    best.expect("at least one candidate").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn losses(values: impl IntoIterator<Item = f64>) -> Vec<(Vec<f64>, f64)> {
        values.into_iter().map(|l| (vec![l], l)).collect()
    }

    #[test]
    fn split_uses_ceil_of_gamma() {
        let s = split_observations(&losses((1..=10).rev().map(f64::from)), 0.3, 1).unwrap();
        let good: Vec<f64> = s.good.iter().map(|t| t.1).collect();
        assert_eq!(good, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.threshold, 4.0);
    }

    #[test]
    fn split_floor_engages() {
        let s = split_observations(&losses((1..=10).map(f64::from)), 0.05, 2).unwrap();
        let good: Vec<f64> = s.good.iter().map(|t| t.1).collect();
        assert_eq!(good, vec![1.0, 2.0]);
    }

    #[test]
    fn split_not_ready() {
        assert_eq!(
            split_observations(&losses([1.0, 2.0, 3.0]), 0.15, 2),
            Err(TpeError::NotReady { have: 3, need: 4 })
        );
    }

    #[test]
    fn single_point_peaks_at_itself() {
        let bounds = [Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)];
        let kde = fit_kde(&[vec![0.3, 0.6]], &bounds, 1e-3).unwrap();
        let peak = kde.density(&[0.3, 0.6]).unwrap();
        for x in [[0.31, 0.6], [0.3, 0.59], [0.0, 0.0], [1.0, 1.0]] {
            assert!(kde.density(&x).unwrap() < peak);
        }
    }

    #[test]
    fn identical_points_floor_bandwidth() {
        let bounds = [Interval::new(-20.0, 20.0)];
        let kde = fit_kde(&vec![vec![1.0]; 5], &bounds, 1e-3).unwrap();
        assert_abs_diff_eq!(kde.bandwidths()[0], 0.04, epsilon = 1e-15);
        for x in [-20.0, 1.0, 20.0] {
            assert!(kde.density(&[x]).unwrap().is_finite());
        }
    }

    #[test]
    fn out_of_bounds_query_rejected() {
        let bounds = [Interval::new(0.0, 1.0)];
        let kde = fit_kde(&[vec![0.5]], &bounds, 1e-3).unwrap();
        assert!(matches!(kde.density(&[1.5]), Err(TpeError::OutOfBounds { dim: 0, .. })));
    }

    #[test]
    fn far_tail_is_negligible() {
        let bounds = [Interval::new(-100.0, 100.0)];
        let kde = fit_kde(&[vec![0.0], vec![0.5], vec![-0.5]], &bounds, 1e-3).unwrap();
        let peak = kde.density(&[0.0]).unwrap();
        assert!(kde.density(&[90.0]).unwrap() < 1e-6 * peak);
    }

    #[test]
    fn single_candidate_is_returned() {
        let bounds = [Interval::new(0.0, 1.0)];
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let pair = KdePair {
            good: fit_kde(&pts[..3], &bounds, 1e-3).unwrap(),
            bad: fit_kde(&pts[3..], &bounds, 1e-3).unwrap(),
            budget: 1,
            gamma: 0.3,
        };
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(propose(&pair, 1, &mut a), pair.good.sample(&mut b));
    }
}
