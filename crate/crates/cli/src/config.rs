//! Per-command configuration: TOML file first, then flag overrides.

use std::path::Path;

use anyhow::{Context, Result};
use dto_core::evaluation::{LabelerMode, DEFAULT_HORIZONS};
use dto_core::policy::Rule;
use dto_core::trainers::OptConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

pub fn to_toml<T: Serialize>(cfg: &T) -> Result<String> {
    Ok(toml::to_string_pretty(cfg)?)
}

/// `aft` or `logistic:<hours>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Aft,
    Logistic { horizon_hours: f64 },
}

impl std::str::FromStr for ModelSpec {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        match s.split_once(':') {
            None if s == "aft" => Ok(ModelSpec::Aft),
            Some(("logistic", t)) => match t.parse::<f64>() {
                Ok(h) if h.is_finite() && h > 0.0 => Ok(ModelSpec::Logistic { horizon_hours: h }),
                _ => Err(UsageError(format!("bad logistic horizon {t:?}"))),
            },
            _ => Err(UsageError(format!("model must be `aft` or `logistic:<hours>`, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelSpec::Aft => f.write_str("aft"),
            ModelSpec::Logistic { horizon_hours } => write!(f, "logistic:{horizon_hours}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: String,
    /// Labels for logistic models.
    pub labeler: LabelerMode,
    /// End of the visit log, for naive labels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_until: Option<f64>,
    pub optimizer: OptConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { model: "aft".into(), labeler: LabelerMode::Clean, observed_until: None, optimizer: OptConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub horizons: Vec<f64>,
    pub labelers: Vec<LabelerMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_until: Option<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            horizons: DEFAULT_HORIZONS.to_vec(),
            labelers: vec![LabelerMode::Naive, LabelerMode::Clean],
            observed_until: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub horizon_hours: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { horizon_hours: 24.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecideConfig {
    pub rule: Rule,
    /// Threshold for `threshold` and `ratio`.
    pub kappa: f64,
    /// Minimum expected clicks for `moo`.
    pub c_click: f64,
    /// Send budget for `moo`.
    pub c_send: f64,
}

impl Default for DecideConfig {
    fn default() -> Self {
        Self { rule: Rule::Threshold, kappa: 0.0, c_click: 0.0, c_send: 0.0 }
    }
}
