//! Live providers speaking the common JSON-over-HTTP chat/embedding shape
//! (OpenAI-compatible: `/chat/completions` and `/embeddings`). API keys are
//! read from an environment variable named in the config — never from config
//! values themselves — at request time.

use std::time::{Duration, Instant};

use super::{ChatProvider, EmbeddingProvider, ProviderFailure, ProviderReply, ProviderRequest};

fn api_key(env_var: &str) -> Result<String, ProviderFailure> {
    std::env::var(env_var).map_err(|_| {
        ProviderFailure::fatal(format!("environment variable {env_var} is not set"))
    })
}

fn classify(status: reqwest::StatusCode) -> ProviderFailure {
    let msg = format!("HTTP {status}");
    if status.is_server_error() || status.as_u16() == 429 {
        ProviderFailure::transient(msg)
    } else {
        ProviderFailure::fatal(msg)
    }
}

pub struct HttpChat {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(endpoint: &str, model: &str, api_key_env: &str) -> Self {
        HttpChat {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key_env: api_key_env.to_string(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("HTTP client construction cannot fail"),
        }
    }
}

impl ChatProvider for HttpChat {
    fn complete(&self, req: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
        let key = api_key(&self.api_key_env)?;
        let body = serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let started = Instant::now();
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.endpoint))
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| ProviderFailure::transient(format!("transport: {e}")))?;
        if !resp.status().is_success() {
            return Err(classify(resp.status()));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| ProviderFailure::fatal(format!("bad response JSON: {e}")))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderFailure::fatal("response missing message content"))?
            .to_string();
        Ok(ProviderReply { text, latency_s: started.elapsed().as_secs_f64() })
    }
}

pub struct HttpEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, model: &str, api_key_env: &str) -> Self {
        HttpEmbedder {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key_env: api_key_env.to_string(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("HTTP client construction cannot fail"),
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderFailure> {
        let key = api_key(&self.api_key_env)?;
        let body = serde_json::json!({ "model": self.model, "input": texts });
        let resp = self
            .client
            .post(format!("{}/embeddings", self.endpoint))
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| ProviderFailure::transient(format!("transport: {e}")))?;
        if !resp.status().is_success() {
            return Err(classify(resp.status()));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| ProviderFailure::fatal(format!("bad response JSON: {e}")))?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| ProviderFailure::fatal("response missing data array"))?;
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let vector = item["embedding"]
                .as_array()
                .ok_or_else(|| ProviderFailure::fatal("item missing embedding"))?
                .iter()
                .map(|x| x.as_f64().unwrap_or(0.0) as f32)
                .collect();
            out.push(vector);
        }
        if out.len() != texts.len() {
            return Err(ProviderFailure::fatal(format!(
                "asked for {} embedding(s), got {}",
                texts.len(),
                out.len()
            )));
        }
        Ok(out)
    }
}
