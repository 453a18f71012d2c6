//! Run configuration: the resolved settings written next to every output,
//! the TOML settings file and provider settings from the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cf::{CalibrationMode, CfHyperparameters};
use crate::hybrid::HybridConfig;
use crate::icl::IclConfig;

pub const ENV_ENDPOINT: &str = "PERMASSIST_PROVIDER_ENDPOINT";
pub const ENV_API_KEY: &str = "PERMASSIST_PROVIDER_API_KEY";
pub const ENV_MODEL: &str = "PERMASSIST_PROVIDER_MODEL";
pub const ENV_TIMEOUT: &str = "PERMASSIST_PROVIDER_TIMEOUT_SECS";
pub const ENV_RETRIES: &str = "PERMASSIST_PROVIDER_RETRIES";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid settings file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Cf,
    Icl,
    Hybrid,
}

impl PredictorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Cf => "cf",
            PredictorKind::Icl => "icl",
            PredictorKind::Hybrid => "hybrid",
        }
    }
}

impl FromStr for PredictorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cf" => Ok(PredictorKind::Cf),
            "icl" => Ok(PredictorKind::Icl),
            "hybrid" => Ok(PredictorKind::Hybrid),
            other => Err(format!("unknown predictor `{other}`; expected cf, icl or hybrid")),
        }
    }
}

/// Text-model endpoint settings. The credential is never serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Base URL of an OpenAI-compatible chat-completions API. `None`
    /// selects the built-in mock.
    pub endpoint: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub retries: u32,
    /// Maximum concurrent provider calls.
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self { endpoint: None, api_key: None, model: "o3-mini".into(), timeout_secs: 60, retries: 3, max_in_flight: 4 }
    }
}

impl ProviderConfig {
    /// Reads the `PERMASSIST_PROVIDER_*` variables through `lookup`.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_lookup(lookup)?;
        Ok(c)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Overrides fields present in the environment.
    pub fn apply_lookup(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let get = |k: &str| lookup(k).map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
        if let Some(v) = get(ENV_ENDPOINT) {
            self.endpoint = Some(v);
        }
        if let Some(v) = get(ENV_API_KEY) {
            self.api_key = Some(v);
        }
        if let Some(v) = get(ENV_MODEL) {
            self.model = v;
        }
        if let Some(v) = get(ENV_TIMEOUT) {
            self.timeout_secs = v.parse().map_err(|_| invalid(ENV_TIMEOUT, format!("`{v}` is not a whole number of seconds")))?;
        }
        if let Some(v) = get(ENV_RETRIES) {
            self.retries = v.parse().map_err(|_| invalid(ENV_RETRIES, format!("`{v}` is not a count")))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout_secs == 0 {
            return Err(invalid("timeout_secs", "must be positive"));
        }
        if self.max_in_flight == 0 {
            return Err(invalid("max_in_flight", "must be positive"));
        }
        Ok(())
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint.is_none()
    }
}

/// The TOML settings file. Every section is optional.
///
/// ```toml
/// [hybrid]
/// cf_region_fpr_cap = 0.05
/// cf_region_fnr_cap = 0.05
/// coverage_threshold = 0.9
/// cf_neighbors_per_prompt = 8
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SettingsFile {
    pub hybrid: HybridConfig,
    pub cf: CfHyperparameters,
    pub calibration: CalibrationMode,
    pub icl: IclConfig,
    pub provider: ProviderConfig,
}

impl SettingsFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let s: SettingsFile = toml::from_str(text)?;
        s.hybrid.validate().map_err(|e| invalid("hybrid", e.to_string()))?;
        s.provider.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub dataset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub predictor: Option<PredictorKind>,
    pub hybrid: HybridConfig,
    pub cf: CfHyperparameters,
    pub calibration: CalibrationMode,
    pub icl: IclConfig,
    pub provider: ProviderConfig,
    pub history_ratio: f64,
    pub folds: usize,
    pub workers: Option<usize>,
    /// Crate name to version, for provenance of the outputs.
    pub versions: BTreeMap<String, String>,
}

impl RunConfig {
    pub const FILE_NAME: &'static str = "run_config.json";

    pub fn new(command: impl Into<String>, settings: SettingsFile) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self {
            command: command.into(),
            dataset: None,
            out_dir: None,
            seed: 0,
            predictor: None,
            hybrid: settings.hybrid,
            cf: settings.cf,
            calibration: settings.calibration,
            icl: settings.icl,
            provider: settings.provider,
            history_ratio: 1.0,
            folds: 5,
            workers: None,
            versions,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.history_ratio) {
            return Err(invalid("history_ratio", "must lie in [0, 1]"));
        }
        if self.folds < 2 {
            return Err(invalid("folds", "need at least 2"));
        }
        self.hybrid.validate().map_err(|e| invalid("hybrid", e.to_string()))?;
        self.provider.validate()
    }

    /// Writes the config as pretty JSON into `dir`, returning the path.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(Self::FILE_NAME);
        std::fs::write(&path, serde_json::to_string_pretty(self).expect("config serializes"))?;
        Ok(path)
    }
}
