//! Run configuration file.

use std::path::{Path, PathBuf};

use modecal_core::hyperband::{EarlyStopRule, SchedulerConfig};
use modecal_core::mode::ModeMap;
use modecal_core::sim::Scenario;
use modecal_core::space::{DimSpec, ParameterSpace};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Where the scenario comes from. Paths are relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Inline(Box<Scenario>),
    Path(String),
}

impl Default for ScenarioSource {
    fn default() -> Self {
        ScenarioSource::Path("bundled".into())
    }
}

/// Search space: explicit per-mode bounds, or a box around the scenario's
/// ground-truth intercepts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    AroundGroundTruth { around_ground_truth: CenteredSpec },
    Explicit(ModeMap<DimSpec>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenteredSpec {
    /// half-width in percent of each center value
    pub pct: f64,
    #[serde(default)]
    pub floor: f64,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec::AroundGroundTruth {
            around_ground_truth: CenteredSpec { pct: 20.0, floor: 0.1 },
        }
    }
}

fn default_minutes_per_iteration() -> f64 {
    12.0
}

fn default_time_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: ScenarioSource,
    #[serde(default)]
    pub space: SpaceSpec,
    #[serde(default)]
    pub optimizer: SchedulerConfig,
    #[serde(default)]
    pub early_stop: EarlyStopRule,
    /// virtual minutes charged per simulator iteration by in-process runs
    #[serde(default = "default_minutes_per_iteration")]
    pub minutes_per_iteration: f64,
    /// run-clock minutes per wall-clock minute for networked runs
    #[serde(default = "default_time_scale")]
    pub time_scale: f64,
    /// address the master listens on; in-process workers only when absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioSource::default(),
            space: SpaceSpec::default(),
            optimizer: SchedulerConfig::default(),
            early_stop: EarlyStopRule::default(),
            minutes_per_iteration: default_minutes_per_iteration(),
            time_scale: default_time_scale(),
            listen: None,
            run_dir: None,
        }
    }
}

/// Everything a run needs, with paths resolved and values checked.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub scenario: Scenario,
    pub space: ParameterSpace,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<ResolvedConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        config.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    /// Loads the scenario relative to `base` and validates everything.
    pub fn resolve(self, base: &Path) -> Result<ResolvedConfig, ConfigError> {
        let scenario = match &self.scenario {
            ScenarioSource::Inline(s) => (**s).clone(),
            ScenarioSource::Path(p) => load_scenario(&base.join(p))?,
        };
        scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let space = match &self.space {
            SpaceSpec::Explicit(spec) => ParameterSpace::from_spec(spec),
            SpaceSpec::AroundGroundTruth { around_ground_truth: c } => {
                let truth = scenario.ground_truth.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("space is centered on the ground truth but the scenario has none".into())
                })?;
                ParameterSpace::centered(&truth.0, c.pct / 100.0, c.floor)
            }
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.early_stop
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.minutes_per_iteration > 0.0) || !(self.time_scale > 0.0) {
            return Err(ConfigError::Invalid(
                "minutes_per_iteration and time_scale must be positive".into(),
            ));
        }
        // surfaces ladder, rho and model errors before any worker starts
        modecal_core::hyperband::Scheduler::new(self.optimizer.clone(), space.clone(), 0)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(ResolvedConfig {
            config: self,
            scenario,
            space,
        })
    }
}

/// Reads a scenario file. `bundled` and `bundled-ground-truth` name the
/// built-in scenarios.
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    match path.file_name().and_then(|n| n.to_str()) {
        Some("bundled") if !path.exists() => return Ok(Scenario::bundled()),
        Some("bundled-ground-truth") if !path.exists() => return Ok(Scenario::bundled_with_ground_truth()),
        _ => {}
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_owned(),
        source,
    })
}
