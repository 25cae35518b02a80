//! The bounded search space over the eight mode intercepts.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mode::{Mode, ModeMap, NUM_MODES};

/// Closed interval `[lower, upper]` in utility units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("dimension {mode}: lower bound {lower} exceeds upper bound {upper}")]
    Inverted { mode: Mode, lower: f64, upper: f64 },
    #[error("dimension {mode}: bound is not finite")]
    NonFinite { mode: Mode },
    #[error("relative half-width must be positive, got {0}")]
    BadHalfwidth(f64),
}

/// Identifier of one proposed intercept configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigId(pub u64);

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// One point in the search space: an intercept per mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterceptConfig {
    pub id: ConfigId,
    pub values: [f64; NUM_MODES],
}

impl InterceptConfig {
    pub fn new(id: ConfigId, values: [f64; NUM_MODES]) -> Self {
        InterceptConfig { id, values }
    }

    pub fn get(&self, mode: Mode) -> f64 {
        self.values[mode.index()]
    }
}

/// One out-of-bounds coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundViolation {
    pub mode: Mode,
    pub value: f64,
    pub bound: Interval,
}

/// Every out-of-bounds coordinate of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ViolationReport(pub Vec<BoundViolation>);

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(
                f,
                "{} = {} outside [{}, {}]",
                v.mode, v.value, v.bound.lower, v.bound.upper
            )?;
        }
        Ok(())
    }
}

impl std::error::Error for ViolationReport {}

/// Box-shaped search space, one closed interval per mode in [`Mode::ALL`]
/// order. Point dimensions (`lower == upper`) are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSpace {
    bounds: [Interval; NUM_MODES],
}

impl ParameterSpace {
    pub fn new(bounds: [Interval; NUM_MODES]) -> Result<Self, SpaceError> {
        for (mode, b) in Mode::ALL.iter().zip(bounds.iter()) {
            if !b.lower.is_finite() || !b.upper.is_finite() {
                return Err(SpaceError::NonFinite { mode: *mode });
            }
            if b.lower > b.upper {
                return Err(SpaceError::Inverted {
                    mode: *mode,
                    lower: b.lower,
                    upper: b.upper,
                });
            }
        }
        Ok(ParameterSpace { bounds })
    }

    /// The same interval on every dimension, e.g. `[-20, 20]^8`.
    pub fn cube(lower: f64, upper: f64) -> Result<Self, SpaceError> {
        ParameterSpace::new([Interval::new(lower, upper); NUM_MODES])
    }

    /// Box around `center` with per-dimension half-width
    /// `max(|center_k| * relative_halfwidth, absolute_floor)`.
    pub fn centered(
        center: &[f64; NUM_MODES],
        relative_halfwidth: f64,
        absolute_floor: f64,
    ) -> Result<Self, SpaceError> {
        if !(relative_halfwidth > 0.0) {
            return Err(SpaceError::BadHalfwidth(relative_halfwidth));
        }
        let bounds = center.map(|c| {
            let half = (c.abs() * relative_halfwidth).max(absolute_floor);
            Interval::new(c - half, c + half)
        });
        ParameterSpace::new(bounds)
    }

    pub fn intervals(&self) -> &[Interval; NUM_MODES] {
        &self.bounds
    }

    pub fn bound(&self, mode: Mode) -> Interval {
        self.bounds[mode.index()]
    }

    /// Independent uniform draw on every dimension.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, id: ConfigId, rng: &mut R) -> InterceptConfig {
        let values = self.bounds.map(|b| {
            let u: f64 = rng.random();
            // keeps point dimensions exact and never overshoots the upper bound
            b.clamp(b.lower + u * b.width())
        });
        InterceptConfig::new(id, values)
    }

    /// Reports every coordinate outside its (closed) bound.
    pub fn validate(&self, config: &InterceptConfig) -> Result<(), ViolationReport> {
        let violations: Vec<_> = Mode::ALL
            .iter()
            .zip(self.bounds.iter())
            .zip(config.values.iter())
            .filter(|((_, b), v)| !b.contains(**v))
            .map(|((mode, b), v)| BoundViolation {
                mode: *mode,
                value: *v,
                bound: *b,
            })
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ViolationReport(violations))
        }
    }

    pub fn clip(&self, values: &[f64; NUM_MODES]) -> [f64; NUM_MODES] {
        std::array::from_fn(|k| self.bounds[k].clamp(values[k]))
    }

    /// Affine map to the unit cube; point dimensions map to 0.5.
    pub fn to_unit(&self, values: &[f64; NUM_MODES]) -> [f64; NUM_MODES] {
        std::array::from_fn(|k| {
            let b = self.bounds[k];
            if b.width() > 0.0 {
                (values[k] - b.lower) / b.width()
            } else {
                0.5
            }
        })
    }

    pub fn from_unit(&self, unit: &[f64]) -> [f64; NUM_MODES] {
        std::array::from_fn(|k| {
            let b = self.bounds[k];
            b.clamp(b.lower + unit[k] * b.width())
        })
    }

    /// Builds a space from its file representation.
    pub fn from_spec(spec: &ModeMap<DimSpec>) -> Result<Self, SpaceError> {
        let mut bounds = [Interval::new(0.0, 0.0); NUM_MODES];
        for (mode, dim) in spec.iter() {
            bounds[mode.index()] = match *dim {
                DimSpec::Range([lower, upper]) => Interval::new(lower, upper),
                DimSpec::Centered { center, pct, floor } => {
                    if !(pct > 0.0) {
                        return Err(SpaceError::BadHalfwidth(pct / 100.0));
                    }
                    let half = (center.abs() * pct / 100.0).max(floor);
                    Interval::new(center - half, center + half)
                }
            };
        }
        ParameterSpace::new(bounds)
    }

    pub fn to_spec(&self) -> ModeMap<DimSpec> {
        ModeMap(self.bounds.map(|b| DimSpec::Range([b.lower, b.upper])))
    }
}

/// File form of one dimension: `[lower, upper]` or `{center, pct, floor}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimSpec {
    Range([f64; 2]),
    Centered {
        center: f64,
        /// half-width in percent of `|center|`
        pct: f64,
        #[serde(default)]
        floor: f64,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_in_bounds() {
        let space = ParameterSpace::cube(-20.0, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..1000 {
            let c = space.sample_uniform(ConfigId(i), &mut rng);
            assert!(c.values.iter().all(|v| (-20.0..=20.0).contains(v)));
        }
    }

    #[test]
    fn point_space_samples_zero_vector() {
        let space = ParameterSpace::cube(0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(space.sample_uniform(ConfigId(0), &mut rng).values, [0.0; NUM_MODES]);
    }

    #[test]
    fn sample_mean_is_centered() {
        let space = ParameterSpace::cube(-100.0, 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sums = [0.0; NUM_MODES];
        for i in 0..n {
            let c = space.sample_uniform(ConfigId(i), &mut rng);
            for k in 0..NUM_MODES {
                sums[k] += c.values[k];
            }
        }
        // sd of the mean is 100/sqrt(3)/sqrt(1e5) ~ 0.18, so 1.0 is > 5 sd
        for s in sums {
            assert!((s / n as f64).abs() < 1.0, "{}", s / n as f64);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let space = ParameterSpace::cube(-5.0, 5.0).unwrap();
        let a = space.sample_uniform(ConfigId(1), &mut ChaCha8Rng::seed_from_u64(42));
        let b = space.sample_uniform(ConfigId(1), &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn centered_space_arithmetic() {
        let mut center = [0.0; NUM_MODES];
        center[0] = 10.0;
        center[2] = -5.0;
        let s = ParameterSpace::centered(&center, 0.20, 1.0).unwrap();
        assert_abs_diff_eq!(s.intervals()[0].lower, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.intervals()[0].upper, 12.0, epsilon = 1e-12);
        assert_eq!(s.intervals()[1], Interval::new(-1.0, 1.0));

        let s = ParameterSpace::centered(&center, 0.05, 0.1).unwrap();
        assert_abs_diff_eq!(s.intervals()[2].lower, -5.25, epsilon = 1e-12);
        assert_abs_diff_eq!(s.intervals()[2].upper, -4.75, epsilon = 1e-12);
        assert!(ParameterSpace::centered(&center, 0.0, 1.0).is_err());
    }

    #[test]
    fn validate_closed_bounds() {
        let space = ParameterSpace::cube(-20.0, 20.0).unwrap();
        let mut values = [0.0; NUM_MODES];
        assert!(space.validate(&InterceptConfig::new(ConfigId(0), values)).is_ok());
        values[3] = 20.0;
        assert!(space.validate(&InterceptConfig::new(ConfigId(0), values)).is_ok());
        values[5] = 21.0;
        let report = space
            .validate(&InterceptConfig::new(ConfigId(0), values))
            .unwrap_err();
        assert_eq!(report.0.len(), 1);
        assert_eq!(report.0[0].mode, Mode::RideHailTransit);
        assert!(report.to_string().contains("ride-hail-transit = 21"));
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(matches!(
            ParameterSpace::cube(1.0, -1.0),
            Err(SpaceError::Inverted { .. })
        ));
    }

    #[test]
    fn spec_shorthand() {
        let json = r#"{"bike":[-20,20],"car":{"center":10,"pct":20},"drive-transit":{"center":0,"pct":20,"floor":1},
            "ride-hail":[-1,1],"ride-hail-pooled":[-1,1],"ride-hail-transit":[-1,1],"walk":[-1,1],"walk-transit":[-1,1]}"#;
        let spec: ModeMap<DimSpec> = serde_json::from_str(json).unwrap();
        let s = ParameterSpace::from_spec(&spec).unwrap();
        assert_eq!(s.bound(Mode::Bike), Interval::new(-20.0, 20.0));
        assert_abs_diff_eq!(s.bound(Mode::Car).lower, 8.0, epsilon = 1e-12);
        assert_eq!(s.bound(Mode::DriveTransit), Interval::new(-1.0, 1.0));
    }

    #[test]
    fn unit_round_trip() {
        let s = ParameterSpace::cube(-20.0, 20.0).unwrap();
        let v = [1.0, -2.0, 3.0, 20.0, -20.0, 0.0, 5.5, -7.25];
        let back = s.from_unit(&s.to_unit(&v));
        for k in 0..NUM_MODES {
            assert_abs_diff_eq!(back[k], v[k], epsilon = 1e-12);
        }
    }
}
