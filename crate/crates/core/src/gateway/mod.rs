//! Model gateway: one funnel for every chat completion and embedding the
//! pipeline requests.
//!
//! Callers name the pipeline phase and a fine-grained purpose for each call;
//! the gateway resolves the provider, applies the phase temperature, retries
//! transient transport failures, and appends a [`CallRecord`] to an
//! inspectable log. The log is what tests (and the bench harness) use to
//! assert traffic-shape properties — e.g. "no construction calls on a cache
//! hit" or "the selector ran only on disagreements" — without reaching into
//! provider internals.
//!
//! Three chat slots exist: the main reasoner, a separately configurable
//! lightweight selector, and the judge. Embeddings are optional; when absent,
//! similarity-guided steps fall back to input order.

mod embed;
mod http;
mod scripted;

pub use embed::{cosine, EmbedError, HashEmbedder};
pub use http::{HttpChat, HttpEmbedder};
pub use scripted::{FixedChat, ScriptedChat, TranscriptFile};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

/// Pipeline phase a model call belongs to. Drives temperature selection and
/// provider routing, and is recorded on every log entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Construction,
    Navigation,
    Symbolic,
    Selection,
    Judge,
}

/// Per-phase sampling temperatures. Construction and selection run greedy;
/// the reasoning phases keep a little entropy.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PhaseTemperatures {
    pub construction: f64,
    pub navigation: f64,
    pub symbolic: f64,
    pub selection: f64,
    pub judge: f64,
}

impl Default for PhaseTemperatures {
    fn default() -> Self {
        PhaseTemperatures {
            construction: 0.0,
            navigation: 0.3,
            symbolic: 0.3,
            selection: 0.0,
            judge: 0.3,
        }
    }
}

impl PhaseTemperatures {
    pub fn for_phase(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Construction => self.construction,
            Phase::Navigation => self.navigation,
            Phase::Symbolic => self.symbolic,
            Phase::Selection => self.selection,
            Phase::Judge => self.judge,
        }
    }
}

/// What a provider sees for one completion attempt.
pub struct ProviderRequest<'a> {
    pub system: &'a str,
    pub user: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug)]
pub struct ProviderReply {
    pub text: String,
    /// Wall-clock (live providers) or scripted latency for this call, in
    /// seconds. Feeds the timing fields of batch reports.
    pub latency_s: f64,
}

/// Provider-level failure. `transient` failures are retried by the gateway;
/// `transcript_miss` marks a scripted provider that had no matching entry,
/// which is never retried.
#[derive(Debug, Clone)]
pub struct ProviderFailure {
    pub transient: bool,
    pub transcript_miss: bool,
    pub message: String,
}

impl ProviderFailure {
    pub fn transient(message: impl Into<String>) -> Self {
        ProviderFailure { transient: true, transcript_miss: false, message: message.into() }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        ProviderFailure { transient: false, transcript_miss: false, message: message.into() }
    }

    pub fn miss(message: impl Into<String>) -> Self {
        ProviderFailure { transient: false, transcript_miss: true, message: message.into() }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderFailure>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("scripted transcript miss for `{purpose}`: {message}")]
    TranscriptMiss { purpose: String, message: String },
    #[error("provider failure for `{purpose}` after {attempts} attempt(s): {message}")]
    Provider { purpose: String, attempts: u32, message: String },
    #[error("no embedding provider configured")]
    NoEmbedder,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// One logged gateway call.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CallRecord {
    pub phase: Phase,
    /// Fine-grained step name, e.g. `hierarchy-identify`, `sufficiency`,
    /// `select-children`, `selector`.
    pub purpose: String,
    /// `"chat"` or `"embed"`.
    pub kind: &'static str,
    pub temperature: f64,
    /// Provider attempts spent on this call, counting transient retries.
    pub attempts: u32,
    /// Total latency across those attempts, seconds.
    pub latency_s: f64,
    pub system: String,
    pub user: String,
    pub response: String,
    pub ok: bool,
}

pub struct Gateway {
    chat: Arc<dyn ChatProvider>,
    selector: Arc<dyn ChatProvider>,
    judge: Arc<dyn ChatProvider>,
    embedder: Option<Arc<dyn EmbeddingProvider>>,
    pub temperatures: PhaseTemperatures,
    pub max_tokens: u32,
    retry_attempts: u32,
    log: Mutex<Vec<CallRecord>>,
    embed_cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl Gateway {
    /// Gateway with `chat` serving all three chat slots, no embedder, default
    /// temperatures, and a retry budget of 3 attempts.
    pub fn new(chat: Arc<dyn ChatProvider>) -> Self {
        Gateway {
            selector: chat.clone(),
            judge: chat.clone(),
            chat,
            embedder: None,
            temperatures: PhaseTemperatures::default(),
            max_tokens: 4096,
            retry_attempts: 3,
            log: Mutex::new(Vec::new()),
            embed_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_selector(mut self, selector: Arc<dyn ChatProvider>) -> Self {
        self.selector = selector;
        self
    }

    pub fn with_judge(mut self, judge: Arc<dyn ChatProvider>) -> Self {
        self.judge = judge;
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn with_temperatures(mut self, temperatures: PhaseTemperatures) -> Self {
        self.temperatures = temperatures;
        self
    }

    pub fn with_retry_attempts(mut self, attempts: u32) -> Self {
        self.retry_attempts = attempts.max(1);
        self
    }

    pub fn has_embedder(&self) -> bool {
        self.embedder.is_some()
    }

    /// Runs one completion through the provider for `phase`, retrying
    /// transient failures up to the configured budget.
    pub fn complete(
        &self,
        phase: Phase,
        purpose: &str,
        system: &str,
        user: &str,
    ) -> Result<String, GatewayError> {
        let provider = match phase {
            Phase::Selection => &self.selector,
            Phase::Judge => &self.judge,
            _ => &self.chat,
        };
        let temperature = self.temperatures.for_phase(phase);
        let req = ProviderRequest { system, user, temperature, max_tokens: self.max_tokens };

        let mut attempts = 0;
        let mut latency = 0.0;
        let outcome = loop {
            attempts += 1;
            match provider.complete(&req) {
                Ok(reply) => {
                    latency += reply.latency_s;
                    break Ok(reply.text);
                }
                Err(failure) if failure.transient && attempts < self.retry_attempts => continue,
                Err(failure) => break Err(failure),
            }
        };

        let record = |response: &str, ok: bool| CallRecord {
            phase,
            purpose: purpose.to_string(),
            kind: "chat",
            temperature,
            attempts,
            latency_s: latency,
            system: system.to_string(),
            user: user.to_string(),
            response: response.to_string(),
            ok,
        };
        match outcome {
            Ok(text) => {
                self.log.lock().unwrap().push(record(&text, true));
                Ok(text)
            }
            Err(failure) => {
                self.log.lock().unwrap().push(record(&format!("<error: {}>", failure.message), false));
                if failure.transcript_miss {
                    Err(GatewayError::TranscriptMiss {
                        purpose: purpose.to_string(),
                        message: failure.message,
                    })
                } else {
                    Err(GatewayError::Provider {
                        purpose: purpose.to_string(),
                        attempts,
                        message: failure.message,
                    })
                }
            }
        }
    }

    /// Embeds `texts`, memoizing per distinct text for the lifetime of this
    /// gateway. Only cache misses reach the provider.
    pub fn embed(&self, phase: Phase, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let embedder = self.embedder.as_ref().ok_or(GatewayError::NoEmbedder)?;
        let missing: Vec<String> = {
            let cache = self.embed_cache.lock().unwrap();
            let mut seen = Vec::new();
            for t in texts {
                if !cache.contains_key(t) && !seen.contains(t) {
                    seen.push(t.clone());
                }
            }
            seen
        };
        if !missing.is_empty() {
            let result = embedder.embed(&missing);
            match result {
                Ok(vectors) => {
                    let mut cache = self.embed_cache.lock().unwrap();
                    for (t, v) in missing.iter().zip(vectors) {
                        cache.insert(t.clone(), v);
                    }
                    self.log.lock().unwrap().push(CallRecord {
                        phase,
                        purpose: "embed".into(),
                        kind: "embed",
                        temperature: 0.0,
                        attempts: 1,
                        latency_s: 0.0,
                        system: String::new(),
                        user: format!("{} text(s)", missing.len()),
                        response: String::new(),
                        ok: true,
                    });
                }
                Err(failure) => {
                    return Err(GatewayError::Provider {
                        purpose: "embed".into(),
                        attempts: 1,
                        message: failure.message,
                    })
                }
            }
        }
        let cache = self.embed_cache.lock().unwrap();
        Ok(texts.iter().map(|t| cache[t].clone()).collect())
    }

    pub fn log(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap().clone()
    }

    /// Number of logged calls; `log_since(n)` gives everything appended after
    /// a call-site captured the count.
    pub fn log_len(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn log_since(&self, mark: usize) -> Vec<CallRecord> {
        self.log.lock().unwrap()[mark..].to_vec()
    }
}

/// Strips a surrounding Markdown code fence from a model response, tolerating
/// a language tag after the opening backticks and prose before the fence.
/// Responses without a fence come back trimmed and otherwise untouched.
pub fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(open) = trimmed.find("```") else {
        return trimmed;
    };
    let after_ticks = &trimmed[open + 3..];
    // Skip the language tag (everything up to the first newline).
    let Some(nl) = after_ticks.find('\n') else {
        return trimmed;
    };
    let body = &after_ticks[nl + 1..];
    match body.rfind("```") {
        Some(close) => body[..close].trim(),
        None => body.trim(),
    }
}
