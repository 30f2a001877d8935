//! Runtime configuration: client and expert endpoints plus guide settings.

use std::path::{Path, PathBuf};

use guided_reasoning::branching::BranchingConfig;
use guided_reasoning::gateway::ScriptMode;
use guided_reasoning::guide::GuideConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CLIENT_KEY_VAR: &str = "GR_API_KEY_CLIENT";
pub const EXPERT_KEY_VAR: &str = "GR_API_KEY_EXPERT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("endpoint {0} needs either `script` or both `base_url` and `model`")]
    Incomplete(&'static str),
    #[error("temperature of {0} must lie in [0, 2]")]
    Temperature(&'static str),
    #[error("suspension.n_paraphrases must be at least 2")]
    Paraphrases,
    #[error("branching.threshold must lie in [0, 1]")]
    Threshold,
}

/// One chat backend: an OpenAI-compatible server or a script file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    /// JSON script answering requests instead of a server.
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub script_mode: ScriptMode,
    /// Set to false for servers that do not return token log-probabilities.
    pub logprobs: Option<bool>,
}

impl Endpoint {
    pub const DEFAULT_MAX_TOKENS: u32 = 1024;

    pub fn max_tokens(&self) -> u32 {
        self.max_tokens.unwrap_or(Self::DEFAULT_MAX_TOKENS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Suspension {
    pub n_paraphrases: usize,
}

impl Default for Suspension {
    fn default() -> Self {
        Suspension {
            n_paraphrases: GuideConfig::default().n_paraphrases,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub client: Endpoint,
    pub expert: Endpoint,
    pub branching: BranchingConfig,
    pub suspension: Suspension,
    pub parallelism: usize,
    /// Character budget for the protocol in follow-up prompts.
    pub context_budget: usize,
    /// Directory overriding the built-in prompt templates.
    pub templates: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let guide = GuideConfig::default();
        Config {
            client: Endpoint::default(),
            expert: Endpoint::default(),
            branching: guide.branching,
            suspension: Suspension::default(),
            parallelism: guide.parallelism,
            context_budget: guide.context_budget,
            templates: None,
        }
    }
}

impl Config {
    pub const CLIENT_TEMPERATURE: f64 = 0.6;
    pub const EXPERT_TEMPERATURE: f64 = 0.0;

    /// Reads a TOML document, or JSON if the file name ends in `.json`.
    /// Relative script and template paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut cfg: Config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.client.script, &mut cfg.expert.script, &mut cfg.templates]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, e) in [("client", &self.client), ("expert", &self.expert)] {
            if e.script.is_none() && (e.base_url.is_none() || e.model.is_none()) {
                return Err(ConfigError::Incomplete(name));
            }
            if e.temperature.is_some_and(|t| !(0.0..=2.0).contains(&t)) {
                return Err(ConfigError::Temperature(name));
            }
        }
        if self.suspension.n_paraphrases < 2 {
            return Err(ConfigError::Paraphrases);
        }
        if !(0.0..=1.0).contains(&self.branching.threshold) {
            return Err(ConfigError::Threshold);
        }
        Ok(())
    }

    pub fn client_temperature(&self) -> f64 {
        self.client.temperature.unwrap_or(Self::CLIENT_TEMPERATURE)
    }

    pub fn expert_temperature(&self) -> f64 {
        self.expert.temperature.unwrap_or(Self::EXPERT_TEMPERATURE)
    }

    pub fn guide_config(&self) -> GuideConfig {
        GuideConfig {
            branching: self.branching,
            parallelism: self.parallelism.max(1),
            n_paraphrases: self.suspension.n_paraphrases,
            context_budget: self.context_budget,
        }
    }
}
