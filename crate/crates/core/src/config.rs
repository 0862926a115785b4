//! The single run-config file: search hyperparameters, gateway settings,
//! and the model roster, as one TOML document. Secrets never live here;
//! API keys come from the environment variables named per model.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewaySettings, ModelSpec, Role};
use crate::types::{InvariantError, SearchConfig, Validate};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error("config declares no models")]
    EmptyRoster,
    #[error("duplicate model name {name:?}")]
    DuplicateModel { name: String },
    #[error("no model with the {role} role")]
    MissingRole { role: Role },
}

/// Everything a run needs from disk, plus the raw bytes for manifest
/// snapshotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub gateway: GatewaySettings,
    pub models: Vec<ModelSpec>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        config.validate_all()?;
        Ok(config)
    }

    /// Loads and validates a config file, returning the parsed config and
    /// the byte-exact snapshot text.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String), ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let config = Self::from_toml_str(&text, &path.display().to_string())?;
        Ok((config, text))
    }

    pub fn validate_all(&self) -> Result<(), ConfigError> {
        self.search.validate()?;
        if self.models.is_empty() {
            return Err(ConfigError::EmptyRoster);
        }
        let mut names = std::collections::BTreeSet::new();
        for model in &self.models {
            model.validate()?;
            if !names.insert(model.name.clone()) {
                return Err(ConfigError::DuplicateModel {
                    name: model.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn models_with_role(&self, role: Role) -> Vec<&ModelSpec> {
        self.models.iter().filter(|m| m.has_role(role)).collect()
    }

    pub fn require_role(&self, role: Role) -> Result<&ModelSpec, ConfigError> {
        self.models
            .iter()
            .find(|m| m.has_role(role))
            .ok_or(ConfigError::MissingRole { role })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[search]
batch_size = 4
beam_width = 12
depth_initial = 4
depth_extended = 6
redundancy_cap = 3
score_exponent = 2.0
inclusion_threshold = 0.8
potential_threshold = 0.6

[gateway]
max_concurrency = 4
offline = true

[[models]]
name = "proxy-model"
roles = ["proxy"]
endpoint = "mock:demo-proxy"
temperature = 0.7
max_tokens = 1024
prompt_price = 0.15
completion_price = 0.6

[[models]]
name = "sim-a"
roles = ["simulator", "target"]
endpoint = "mock:demo-sim-flip"
temperature = 0.001
max_tokens = 1024
"#;

    #[test]
    fn sample_config_parses_with_defaults_filled() {
        let config = RunConfig::from_toml_str(SAMPLE, "sample").unwrap();
        assert_eq!(config.search.batch_size, 4);
        assert_eq!(config.search.perturbation_temperature, 0.7); // default
        assert!(config.gateway.offline);
        assert_eq!(config.models.len(), 2);
        assert_eq!(config.models_with_role(Role::Simulator).len(), 1);
        assert!(config.require_role(Role::Proxy).is_ok());
        assert!(matches!(
            config.require_role(Role::Judge),
            Err(ConfigError::MissingRole { role: Role::Judge })
        ));
    }

    #[test]
    fn invalid_depths_fail_validation() {
        let bad = SAMPLE.replace("depth_extended = 6", "depth_extended = 2");
        let err = RunConfig::from_toml_str(&bad, "sample").unwrap_err();
        assert!(err.to_string().contains("depth_extended"));
    }

    #[test]
    fn unknown_language_codes_are_rejected_in_any_languageful_field() {
        // Language signals parse failure through serde
        let parsed: Result<crate::types::Language, _> = serde_json::from_str("\"xx\"");
        assert!(parsed.is_err());
    }

    #[test]
    fn duplicate_model_names_are_rejected() {
        let dup = SAMPLE.replace("name = \"sim-a\"", "name = \"proxy-model\"");
        let err = RunConfig::from_toml_str(&dup, "sample").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateModel { .. }));
    }
}
