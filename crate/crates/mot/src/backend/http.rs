//! Client for OpenAI-compatible chat and embedding endpoints.

use std::sync::OnceLock;
use std::time::Duration;

use mot_core::{CompletionRequest, EmbeddingVector, Role};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{check_embed_inputs, CallStats, Decoded, Embedder, LanguageModel, Meter, Usage};
use crate::error::BackendError;

pub const API_KEY_VAR: &str = "MOT_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

enum Failure {
    Retry(String),
    Fatal(BackendError),
}

#[derive(Debug, Clone)]
struct Client {
    http: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl Client {
    fn new(base_url: &str, retry: RetryPolicy) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| BackendError::Configuration(format!("http client: {e}")))?;
        Ok(Self {
            http,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty()),
            retry,
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/{path}", self.base_url);
        let mut delay = self.retry.base_delay;
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            match self.post_once(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => {
                    log::warn!("{url}: attempt {attempt} failed: {msg}");
                    last = msg;
                    if attempt < self.retry.attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(BackendError::Retriable {
            attempts: self.retry.attempts.max(1),
            message: last,
        })
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Retry(format!("status {status}")));
        }
        let text = resp.text().map_err(|e| Failure::Retry(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(Failure::Fatal(BackendError::Protocol(format!(
                "status {status}: {snippet}"
            ))));
        }
        serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(BackendError::Protocol(format!("malformed response: {e}"))))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    #[serde(default)]
    index: Option<usize>,
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct HttpModel {
    client: Client,
    model_id: String,
    meter: Meter,
}

impl HttpModel {
    pub fn new(base_url: &str, model_id: impl Into<String>, retry: RetryPolicy) -> Result<Self, BackendError> {
        Ok(Self {
            client: Client::new(base_url, retry)?,
            model_id: model_id.into(),
            meter: Meter::default(),
        })
    }

    fn body(&self, request: &CompletionRequest, n: usize) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::AssistantPrefix => "assistant",
                };
                json!({"role": role, "content": m.text})
            })
            .collect();
        json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "n": n,
            "max_tokens": request.max_tokens,
            "stop": request.stop_sequences,
        })
    }
}

impl LanguageModel for HttpModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn decode(&self, request: &CompletionRequest, indices: &[usize]) -> Result<Decoded, BackendError> {
        let n = indices.len();
        let value = self.client.post("chat/completions", &self.body(request, n))?;
        let resp: ChatResponse =
            serde_json::from_value(value).map_err(|e| BackendError::Protocol(format!("chat response: {e}")))?;
        if resp.choices.len() != n {
            return Err(BackendError::Protocol(format!(
                "asked for {n} choices, received {}",
                resp.choices.len()
            )));
        }
        let mut choices: Vec<(usize, String)> = resp
            .choices
            .into_iter()
            .enumerate()
            .map(|(pos, c)| (c.index.unwrap_or(pos), c.message.content.unwrap_or_default()))
            .collect();
        choices.sort_by_key(|(i, _)| *i);
        self.meter.record_request(n);
        Ok(Decoded {
            samples: choices.into_iter().map(|(_, t)| t).collect(),
            usage: resp.usage,
        })
    }

    fn stats(&self) -> CallStats {
        self.meter.snapshot()
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

pub struct HttpEmbedder {
    client: Client,
    model_id: String,
    dim: OnceLock<usize>,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model_id: impl Into<String>, retry: RetryPolicy) -> Result<Self, BackendError> {
        Ok(Self {
            client: Client::new(base_url, retry)?,
            model_id: model_id.into(),
            dim: OnceLock::new(),
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embedder_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        check_embed_inputs(texts)?;
        let value = self
            .client
            .post("embeddings", &json!({"model": self.model_id, "input": texts}))?;
        let resp: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| BackendError::Protocol(format!("embedding response: {e}")))?;
        if resp.data.len() != texts.len() {
            return Err(BackendError::Protocol(format!(
                "sent {} texts, received {} embeddings",
                texts.len(),
                resp.data.len()
            )));
        }
        let mut data: Vec<(usize, Vec<f64>)> = resp
            .data
            .into_iter()
            .enumerate()
            .map(|(pos, d)| (d.index.unwrap_or(pos), d.embedding))
            .collect();
        data.sort_by_key(|(i, _)| *i);
        data.into_iter()
            .map(|(_, values)| {
                let expected = *self.dim.get_or_init(|| values.len());
                if values.len() != expected {
                    return Err(BackendError::Internal(format!(
                        "embedding dimension changed from {expected} to {}",
                        values.len()
                    )));
                }
                EmbeddingVector::normalized(values).map_err(|e| BackendError::Protocol(e.to_string()))
            })
            .collect()
    }
}
