//! Closed-form expected improvement and the z-interval.

use super::normal;

/// `mean +- z * std / sqrt(n)`.
pub fn confidence_interval(mean: f64, std: f64, n: usize, z: f64) -> (f64, f64) {
    debug_assert!(n >= 1 && std >= 0.0);
    let half = z * std / (n as f64).sqrt();
    (mean - half, mean + half)
}

/// Expected improvement of a Gaussian `N(mean, std^2)` loss over the
/// incumbent `f_star` (minimization):
/// `[D]+ + std * phi(D / std) - |D| * Phi(-|D| / std)` with `D = f_star - mean`.
pub fn expected_improvement(mean: f64, std: f64, f_star: f64) -> f64 {
    let delta = f_star - mean;
    if std <= 0.0 {
        return delta.max(0.0);
    }
    let ei = delta.max(0.0) + std * normal::pdf(delta / std)
        - delta.abs() * normal::cdf(-delta.abs() / std);
    ei.max(0.0)
}

/// Gradient of [`expected_improvement`] given the gradients of the posterior
/// mean and standard deviation: `-Phi(D/s) grad(mean) + phi(D/s) grad(s)`.
pub fn expected_improvement_gradient(
    mean: f64,
    std: f64,
    f_star: f64,
    dmean: &[f64],
    dstd: &[f64],
) -> Vec<f64> {
    let delta = f_star - mean;
    if std <= 0.0 {
        let s = if delta > 0.0 { -1.0 } else { 0.0 };
        return dmean.iter().map(|d| s * d).collect();
    }
    let u = delta / std;
    let (a, b) = (normal::cdf(u), normal::pdf(u));
    dmean.iter().zip(dstd).map(|(dm, ds)| -a * dm + b * ds).collect()
}
