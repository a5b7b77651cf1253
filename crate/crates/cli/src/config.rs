//! Versioned TOML configuration files.

use std::path::Path;

use hackwatch::detectors::DetectorConfig;
use hackwatch::envgen::StreamConfig;
use hackwatch::eval::{BenchmarkConfig, FactorialConfig, LatencyConfig, MitigationConfig, SensitivityGrid};
use hackwatch::HackingCategory;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

fn version() -> u32 {
    CONFIG_VERSION
}

/// Parses a TOML file; syntax errors, unknown enum values and missing
/// fields are reported with their line and key.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn check_version(v: u32) -> Result<(), CliError> {
    if v == CONFIG_VERSION {
        Ok(())
    } else {
        Err(CliError::Config(format!("unsupported config version {v} (expected {CONFIG_VERSION})")))
    }
}

/// Streams to generate, written in order to one log.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "version")]
    pub version: u32,
    #[serde(rename = "stream")]
    pub streams: Vec<StreamConfig>,
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.version)?;
        if self.streams.is_empty() {
            return Err(CliError::Config("config has no [[stream]] entries".into()));
        }
        for (i, s) in self.streams.iter().enumerate() {
            s.validate().map_err(|e| CliError::Config(format!("stream[{i}]: {e}")))?;
        }
        Ok(())
    }
}

/// Detector parameters for `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "version")]
    pub version: u32,
    #[serde(default)]
    pub detector: DetectorConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { version: CONFIG_VERSION, detector: DetectorConfig::default() }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Category shares of the ablation stream.
    pub shares: Vec<(HackingCategory, f64)>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        let sg = HackingCategory::SpecificationGaming;
        AblationConfig { shares: HackingCategory::ALL.iter().map(|&c| (c, if c == sg { 0.5 } else { 0.1 })).collect() }
    }
}

/// Parameters of every experiment protocol; each section is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub benchmark: BenchmarkConfig,
    pub latency: LatencyConfig,
    pub ablation: AblationConfig,
    pub sensitivity: SensitivityGrid,
    pub factorial: FactorialConfig,
    pub mitigation: MitigationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            benchmark: BenchmarkConfig::default(),
            latency: LatencyConfig::default(),
            ablation: AblationConfig::default(),
            sensitivity: SensitivityGrid::default(),
            factorial: FactorialConfig::default(),
            mitigation: MitigationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.version)?;
        self.benchmark.validate().map_err(|e| CliError::Config(format!("benchmark: {e}")))
    }
}
