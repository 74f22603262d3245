//! Chat-completion and embedding backends.

pub mod cache;
pub mod http;
pub mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};

use mot_core::{CompletionRequest, EmbeddingVector};
use serde::{Deserialize, Serialize};

use crate::error::BackendError;

pub use cache::{CacheKey, CachedModel};
pub use http::{HttpEmbedder, HttpModel, RetryPolicy, API_KEY_VAR};
pub use scripted::{ScriptCall, ScriptFile, ScriptedEmbedder, ScriptedModel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    /// Raw completions in decode order.
    pub samples: Vec<String>,
    pub usage: Option<Usage>,
    /// True when every sample was replayed from the response cache.
    pub cache_hit: bool,
}

/// Fresh completions produced by a backend for some sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub samples: Vec<String>,
    pub usage: Option<Usage>,
}

/// Counters shared by all backends. A "call" is one decoded sample, so a
/// request for 16 paths counts 16.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub requests: u64,
    pub decoded_samples: u64,
    pub cached_samples: u64,
}

impl CallStats {
    pub fn since(&self, earlier: &CallStats) -> CallStats {
        CallStats {
            requests: self.requests - earlier.requests,
            decoded_samples: self.decoded_samples - earlier.decoded_samples,
            cached_samples: self.cached_samples - earlier.cached_samples,
        }
    }
}

#[derive(Debug, Default)]
pub struct Meter {
    requests: AtomicU64,
    decoded_samples: AtomicU64,
    cached_samples: AtomicU64,
}

impl Meter {
    pub fn record_request(&self, decoded: usize) {
        self.requests.fetch_add(1, Ordering::Relaxed);
        self.decoded_samples.fetch_add(decoded as u64, Ordering::Relaxed);
    }

    pub fn record_cached(&self, samples: usize) {
        self.cached_samples.fetch_add(samples as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CallStats {
        CallStats {
            requests: self.requests.load(Ordering::Relaxed),
            decoded_samples: self.decoded_samples.load(Ordering::Relaxed),
            cached_samples: self.cached_samples.load(Ordering::Relaxed),
        }
    }
}

pub trait LanguageModel: Send + Sync {
    fn model_id(&self) -> &str;

    /// Decodes the samples at `indices` of `request`, one text per index.
    /// The request has already been validated.
    fn decode(&self, request: &CompletionRequest, indices: &[usize]) -> Result<Decoded, BackendError>;

    fn stats(&self) -> CallStats;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let indices: Vec<usize> = (0..request.num_samples).collect();
        let decoded = self.decode(request, &indices)?;
        check_sample_count(&decoded, indices.len())?;
        Ok(CompletionResult {
            samples: decoded.samples,
            usage: decoded.usage,
            cache_hit: false,
        })
    }
}

pub(crate) fn check_sample_count(decoded: &Decoded, expected: usize) -> Result<(), BackendError> {
    if decoded.samples.len() != expected {
        return Err(BackendError::Protocol(format!(
            "expected {expected} samples, got {}",
            decoded.samples.len()
        )));
    }
    Ok(())
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn decode(&self, request: &CompletionRequest, indices: &[usize]) -> Result<Decoded, BackendError> {
        (**self).decode(request, indices)
    }
    fn stats(&self) -> CallStats {
        (**self).stats()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn decode(&self, request: &CompletionRequest, indices: &[usize]) -> Result<Decoded, BackendError> {
        (**self).decode(request, indices)
    }
    fn stats(&self) -> CallStats {
        (**self).stats()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }
}

pub trait Embedder: Send + Sync {
    fn embedder_id(&self) -> &str;

    /// One unit vector per text, in input order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        self.embed(&[text])?
            .pop()
            .ok_or_else(|| BackendError::Protocol("embedder returned no vector".into()))
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embedder_id(&self) -> &str {
        (**self).embedder_id()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        (**self).embed(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn embedder_id(&self) -> &str {
        (**self).embedder_id()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        (**self).embed(texts)
    }
}

pub(crate) fn check_embed_inputs(texts: &[&str]) -> Result<(), BackendError> {
    if texts.is_empty() {
        return Err(BackendError::Precondition("nothing to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(BackendError::Precondition(format!("text {i} is blank")));
    }
    Ok(())
}
