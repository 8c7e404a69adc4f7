//! On-disk pipeline configuration.
//!
//! A single TOML file declares the model providers and every tunable the
//! pipeline exposes; [`PipelineConfig::build_gateway`] turns the provider
//! specs into a wired [`Gateway`]. Every section and field has a default, so
//! an empty file is a valid config (a silent fixed provider and the stock
//! thresholds) and real files only state what they change:
//!
//! ```toml
//! retry_attempts = 3
//! offline_judge = true
//!
//! [provider]
//! kind = "http"
//! base_url = "https://api.example.com/v1/chat/completions"
//! model = "table-main"
//! api_key_env = "TABLETREE_API_KEY"
//!
//! [embedder]
//! kind = "hash"
//!
//! [refine]
//! coverage_threshold = 0.8
//! ```
//!
//! Relative `transcript` paths are resolved against the directory holding
//! the config file, so a config can ship next to its transcripts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gateway::{
    ChatProvider, FixedChat, Gateway, HashEmbedder, HttpChat, HttpEmbedder, PhaseTemperatures,
    ScriptedChat,
};
use crate::mode::BudgetConfig;
use crate::navigate::TraversalConfig;
use crate::quality::RefinementConfig;
use crate::symbolic::SymbolicConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("provider setup failed: {0}")]
    Provider(String),
}

/// One chat endpoint. `scripted` replays a recorded transcript, `fixed`
/// answers everything with one string (a stub), `http` talks to an
/// OpenAI-compatible chat-completions server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    Scripted { transcript: PathBuf },
    Fixed {
        #[serde(default)]
        response: String,
    },
    Http {
        base_url: String,
        model: String,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
    },
}

fn default_api_key_env() -> String {
    "TABLETREE_API_KEY".to_string()
}

/// Embedding endpoint. `hash` is the deterministic offline embedder;
/// `http` an OpenAI-compatible embeddings server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hash {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Http {
        base_url: String,
        model: String,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Main chat provider; also serves selection and judging unless those
    /// are overridden below.
    pub provider: ProviderSpec,
    pub selector: Option<ProviderSpec>,
    pub judge: Option<ProviderSpec>,
    /// Omit to run without embeddings (traversal falls back to list order).
    pub embedder: Option<EmbedderSpec>,
    pub budget: BudgetConfig,
    pub refine: RefinementConfig,
    pub traverse: TraversalConfig,
    pub symbolic: SymbolicConfig,
    pub temperatures: PhaseTemperatures,
    pub retry_attempts: u32,
    /// Grade with numeric/text agreement instead of a judge model.
    pub offline_judge: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            provider: ProviderSpec::Fixed { response: String::new() },
            selector: None,
            judge: None,
            embedder: None,
            budget: BudgetConfig::default(),
            refine: RefinementConfig::default(),
            traverse: TraversalConfig::default(),
            symbolic: SymbolicConfig::default(),
            temperatures: PhaseTemperatures::default(),
            retry_attempts: 3,
            offline_judge: true,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Anchor relative transcript paths at `base` (the config's directory).
    fn resolve_paths(&mut self, base: &Path) {
        let specs = [Some(&mut self.provider), self.selector.as_mut(), self.judge.as_mut()];
        for spec in specs.into_iter().flatten() {
            if let ProviderSpec::Scripted { transcript } = spec {
                if transcript.is_relative() {
                    *transcript = base.join(&transcript);
                }
            }
        }
    }

    /// Wire the configured providers into a gateway. Scripted transcripts
    /// are loaded here; a missing or malformed transcript file fails fast.
    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let mut gateway = Gateway::new(build_chat(&self.provider)?)
            .with_temperatures(self.temperatures)
            .with_retry_attempts(self.retry_attempts);
        if let Some(spec) = &self.selector {
            gateway = gateway.with_selector(build_chat(spec)?);
        }
        if let Some(spec) = &self.judge {
            gateway = gateway.with_judge(build_chat(spec)?);
        }
        if let Some(spec) = &self.embedder {
            gateway = gateway.with_embedder(match spec {
                EmbedderSpec::Hash { dim, seed } => {
                    let stock = HashEmbedder::default();
                    Arc::new(HashEmbedder::new(
                        dim.unwrap_or(stock.dim),
                        seed.unwrap_or(stock.seed),
                    ))
                }
                EmbedderSpec::Http { base_url, model, api_key_env } => {
                    Arc::new(HttpEmbedder::new(base_url, model, api_key_env))
                }
            });
        }
        Ok(gateway)
    }
}

fn build_chat(spec: &ProviderSpec) -> Result<Arc<dyn ChatProvider>, ConfigError> {
    Ok(match spec {
        ProviderSpec::Scripted { transcript } => {
            Arc::new(ScriptedChat::from_file(transcript).map_err(ConfigError::Provider)?)
        }
        ProviderSpec::Fixed { response } => Arc::new(FixedChat::new(response)),
        ProviderSpec::Http { base_url, model, api_key_env } => {
            Arc::new(HttpChat::new(base_url, model, api_key_env))
        }
    })
}
