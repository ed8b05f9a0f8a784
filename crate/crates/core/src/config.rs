//! The single JSON run configuration shared by every harness command.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CalibrationConfig;
use crate::formats::read_text;
use crate::noise::KalmanConfig;
use crate::sampling::SamplingConfig;
use crate::synth::ScenarioConfig;
use crate::trajectory::StandardizationConfig;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub uncertainty_bin_width: f64,
    pub min_count: usize,
    pub speed_bin_width: f64,
    pub noise_bin_width: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            uncertainty_bin_width: 1.0,
            min_count: crate::metrics::DEFAULT_MIN_BIN_COUNT,
            speed_bin_width: 1.0,
            noise_bin_width: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub standardization: StandardizationConfig,
    /// When set, `standardize` also keeps this fraction of non-target agents.
    pub include_non_targets: Option<f64>,
    pub sampling: SamplingConfig,
    pub calibration: CalibrationConfig,
    pub kalman: KalmanConfig,
    pub scenario: ScenarioConfig,
    pub analysis: AnalysisConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.standardization.validate()?;
        self.sampling.validate()?;
        self.calibration.sweep.validate()?;
        self.kalman.validate()?;
        self.scenario.validate()
    }

    /// Hash of the fully resolved configuration.
    pub fn hash(&self) -> String {
        content_hash(self)
    }
}

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}
