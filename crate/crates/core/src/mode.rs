//! The eight travel modes and per-mode containers.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const NUM_MODES: usize = 8;

/// Travel modes, in the fixed order used by every per-mode vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Bike,
    Car,
    DriveTransit,
    RideHail,
    RideHailPooled,
    RideHailTransit,
    Walk,
    WalkTransit,
}

impl Mode {
    pub const ALL: [Mode; NUM_MODES] = [
        Mode::Bike,
        Mode::Car,
        Mode::DriveTransit,
        Mode::RideHail,
        Mode::RideHailPooled,
        Mode::RideHailTransit,
        Mode::Walk,
        Mode::WalkTransit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Bike => "bike",
            Mode::Car => "car",
            Mode::DriveTransit => "drive-transit",
            Mode::RideHail => "ride-hail",
            Mode::RideHailPooled => "ride-hail-pooled",
            Mode::RideHailTransit => "ride-hail-transit",
            Mode::Walk => "walk",
            Mode::WalkTransit => "walk-transit",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mode `{0}`")]
pub struct UnknownMode(pub String);

impl FromStr for Mode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| UnknownMode(s.to_string()))
    }
}

/// One value per mode. Serialized as a map keyed by mode name; every mode
/// must be present and unknown names are rejected.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeMap<T>(pub [T; NUM_MODES]);

impl<T> ModeMap<T> {
    pub fn get(&self, mode: Mode) -> &T {
        &self.0[mode.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, &T)> {
        Mode::ALL.into_iter().zip(self.0.iter())
    }
}

impl<T: Serialize> Serialize for ModeMap<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(NUM_MODES))?;
        for (mode, v) in self.iter() {
            map.serialize_entry(mode.name(), v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for ModeMap<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for V<T> {
            type Value = ModeMap<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a map with one entry for each of the {NUM_MODES} modes")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut slots: [Option<T>; NUM_MODES] = Default::default();
                while let Some(key) = access.next_key::<String>()? {
                    let mode = key.parse::<Mode>().map_err(de::Error::custom)?;
                    if slots[mode.index()].is_some() {
                        return Err(de::Error::custom(format!("duplicate mode `{mode}`")));
                    }
                    slots[mode.index()] = Some(access.next_value()?);
                }
                if let Some(missing) = Mode::ALL.iter().find(|m| slots[m.index()].is_none()) {
                    return Err(de::Error::custom(format!("missing mode `{missing}`")));
                }
                Ok(ModeMap(slots.map(|s| s.expect("checked above"))))
            }
        }

        deserializer.deserialize_map(V(std::marker::PhantomData))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShareError {
    #[error("share for {mode} is {value}, outside [0, 100]")]
    OutOfRange { mode: Mode, value: f64 },
    #[error("shares sum to {0}, expected 100")]
    BadTotal(f64),
    #[error("cannot form shares from an empty count vector")]
    Empty,
}

/// Percent of trips per mode; entries lie in `[0, 100]` and sum to 100.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModeMap<f64>", into = "ModeMap<f64>")]
pub struct ModeShare([f64; NUM_MODES]);

/// Absolute tolerance on the share total.
pub const SHARE_SUM_TOLERANCE: f64 = 1e-9;

impl ModeShare {
    pub fn new(shares: [f64; NUM_MODES]) -> Result<Self, ShareError> {
        for (mode, &value) in Mode::ALL.iter().zip(shares.iter()) {
            if !(0.0..=100.0).contains(&value) {
                return Err(ShareError::OutOfRange { mode: *mode, value });
            }
        }
        let total: f64 = shares.iter().sum();
        if (total - 100.0).abs() > SHARE_SUM_TOLERANCE {
            return Err(ShareError::BadTotal(total));
        }
        Ok(ModeShare(shares))
    }

    /// Shares from per-mode trip counts.
    pub fn from_counts(counts: &[u64; NUM_MODES]) -> Result<Self, ShareError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(ShareError::Empty);
        }
        let mut shares = counts.map(|c| 100.0 * c as f64 / total as f64);
        // absorb rounding drift into the largest entry
        let drift = 100.0 - shares.iter().sum::<f64>();
        let largest = (0..NUM_MODES)
            .max_by(|&a, &b| shares[a].total_cmp(&shares[b]))
            .unwrap_or(0);
        shares[largest] += drift;
        Ok(ModeShare(shares))
    }

    /// Shares from choice probabilities (fractions summing to one).
    pub fn from_fractions(p: &[f64; NUM_MODES]) -> Result<Self, ShareError> {
        ModeShare::new(p.map(|x| 100.0 * x))
    }

    /// The adjusted San Francisco benchmark shares (bike, car, drive-transit,
    /// ride-hail, ride-hail-pooled, ride-hail-transit, walk, walk-transit).
    pub fn san_francisco_benchmark() -> Self {
        ModeShare([2.0, 49.0, 4.0, 3.0, 2.0, 1.0, 22.0, 17.0])
    }

    /// Equal share for every mode.
    pub fn uniform() -> Self {
        ModeShare([100.0 / NUM_MODES as f64; NUM_MODES])
    }

    pub fn get(&self, mode: Mode) -> f64 {
        self.0[mode.index()]
    }

    pub fn as_array(&self) -> &[f64; NUM_MODES] {
        &self.0
    }
}

impl TryFrom<ModeMap<f64>> for ModeShare {
    type Error = ShareError;

    fn try_from(m: ModeMap<f64>) -> Result<Self, Self::Error> {
        ModeShare::new(m.0)
    }
}

impl From<ModeShare> for ModeMap<f64> {
    fn from(s: ModeShare) -> Self {
        ModeMap(s.0)
    }
}
