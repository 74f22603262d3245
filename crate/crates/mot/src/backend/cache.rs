//! Persistent per-sample response cache.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use mot_core::{CompletionRequest, Message};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_sample_count, CallStats, CompletionResult, Decoded, LanguageModel, Meter, Usage};
use crate::error::BackendError;

const LOCK_STRIPES: usize = 64;

/// Content hash identifying one sample of one logical request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub digest: String,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_id: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: usize,
    stop: &'a [String],
    sample_index: usize,
}

impl CacheKey {
    pub fn for_sample(request: &CompletionRequest, sample_index: usize) -> Self {
        let material = KeyMaterial {
            model_id: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            stop: &request.stop_sequences,
            sample_index,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        Self {
            digest: hex::encode(Sha256::digest(&bytes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    model_id: String,
    messages: Vec<Message>,
    temperature: f64,
    max_tokens: usize,
    stop: Vec<String>,
    sample_index: usize,
    text: String,
}

/// Wraps a model so each sample is stored under its own key and replayed
/// on later requests. Asking for more samples than before only decodes the
/// new indices.
pub struct CachedModel<M> {
    inner: M,
    dir: PathBuf,
    locks: Vec<Mutex<()>>,
    meter: Meter,
}

impl<M: LanguageModel> CachedModel<M> {
    pub fn new(inner: M, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            inner,
            dir,
            locks: (0..LOCK_STRIPES).map(|_| Mutex::new(())).collect(),
            meter: Meter::default(),
        })
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(&key.digest[..2]).join(format!("{}.json", key.digest))
    }

    fn read(&self, key: &CacheKey) -> Option<String> {
        let path = self.path_for(key);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<CacheRecord>(&bytes) {
            Ok(record) if record.key == key.digest => Some(record.text),
            _ => {
                log::warn!("ignoring unreadable cache entry {}", path.display());
                None
            }
        }
    }

    fn write(&self, key: &CacheKey, request: &CompletionRequest, index: usize, text: &str) -> std::io::Result<()> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache entries live in a shard directory");
        std::fs::create_dir_all(parent)?;
        let record = CacheRecord {
            key: key.digest.clone(),
            model_id: request.model_id.clone(),
            messages: request.messages.clone(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            stop: request.stop_sequences.clone(),
            sample_index: index,
            text: text.to_string(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        serde_json::to_writer_pretty(&mut tmp, &record)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }

    fn stripe(&self, key: &CacheKey) -> &Mutex<()> {
        let mut h = DefaultHasher::new();
        key.digest.hash(&mut h);
        &self.locks[(h.finish() as usize) % LOCK_STRIPES]
    }

    fn lookup(&self, keys: &[CacheKey]) -> (Vec<Option<String>>, Vec<usize>) {
        let found: Vec<Option<String>> = keys.iter().map(|k| self.read(k)).collect();
        let missing = found
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_none())
            .map(|(i, _)| i)
            .collect();
        (found, missing)
    }
}

impl<M: LanguageModel> LanguageModel for CachedModel<M> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn decode(&self, request: &CompletionRequest, indices: &[usize]) -> Result<Decoded, BackendError> {
        self.inner.decode(request, indices)
    }

    fn stats(&self) -> CallStats {
        let mut stats = self.inner.stats();
        stats.cached_samples += self.meter.snapshot().cached_samples;
        stats
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let keys: Vec<CacheKey> = (0..request.num_samples)
            .map(|i| CacheKey::for_sample(request, i))
            .collect();
        let (found, missing) = self.lookup(&keys);
        if missing.is_empty() {
            self.meter.record_cached(keys.len());
            return Ok(CompletionResult {
                samples: found.into_iter().flatten().collect(),
                usage: None,
                cache_hit: true,
            });
        }

        // Requests sharing their first sample share a stripe, so two workers
        // never decode or write the same samples at once.
        let _guard = self.stripe(&keys[0]).lock().unwrap_or_else(|p| p.into_inner());
        let (mut found, missing) = self.lookup(&keys);
        let cached = keys.len() - missing.len();
        self.meter.record_cached(cached);
        let mut usage: Option<Usage> = None;
        if !missing.is_empty() {
            let decoded = self.inner.decode(request, &missing)?;
            check_sample_count(&decoded, missing.len())?;
            usage = decoded.usage;
            for (&i, text) in missing.iter().zip(decoded.samples) {
                self.write(&keys[i], request, i, &text)?;
                found[i] = Some(text);
            }
        }
        Ok(CompletionResult {
            samples: found.into_iter().flatten().collect(),
            usage,
            cache_hit: missing.is_empty(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedModel;
    use mot_core::prompt::DecodeSettings;

    fn request(n: usize) -> CompletionRequest {
        let mut r = DecodeSettings {
            model_id: "m".into(),
            max_tokens: 32,
        }
        .greedy("Q: q\nA:");
        if n > 1 {
            r.temperature = 1.2;
            r.num_samples = n;
        }
        r
    }

    fn model() -> ScriptedModel {
        ScriptedModel::new("m").answers("q", vec!["a".into(), "b".into(), "c".into()])
    }

    #[test]
    fn second_call_is_a_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedModel::new(model(), dir.path()).unwrap();
        let first = cached.complete(&request(1)).unwrap();
        let second = cached.complete(&request(1)).unwrap();
        assert!(!first.cache_hit);
        assert!(second.cache_hit);
        assert_eq!(first.samples, second.samples);
        let stats = cached.stats();
        assert_eq!((stats.decoded_samples, stats.cached_samples), (1, 1));
    }

    #[test]
    fn growing_sample_count_reuses_samples() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedModel::new(model(), dir.path()).unwrap();
        cached.complete(&request(2)).unwrap();
        let more = cached.complete(&request(4)).unwrap();
        assert_eq!(more.samples, ["a", "b", "c", "a"]);
        assert!(!more.cache_hit);
        assert_eq!(cached.stats().decoded_samples, 4);
        assert_eq!(cached.stats().cached_samples, 2);
    }

    #[test]
    fn survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let first = CachedModel::new(model(), dir.path())
            .unwrap()
            .complete(&request(3))
            .unwrap();
        let reopened = CachedModel::new(ScriptedModel::new("m"), dir.path()).unwrap();
        let replay = reopened.complete(&request(3)).unwrap();
        assert!(replay.cache_hit);
        assert_eq!(replay.samples, first.samples);
        assert_eq!(reopened.stats().decoded_samples, 0);
    }

    #[test]
    fn keys_depend_on_every_field() {
        let base = request(1);
        let k = CacheKey::for_sample(&base, 0);
        assert_eq!(k, CacheKey::for_sample(&base.clone(), 0));
        assert_ne!(k, CacheKey::for_sample(&base, 1));
        let mut other = base.clone();
        other.max_tokens = 33;
        assert_ne!(k, CacheKey::for_sample(&other, 0));
        let mut other = base.clone();
        other.model_id = "n".into();
        assert_ne!(k, CacheKey::for_sample(&other, 0));
        let mut other = base.clone();
        other.stop_sequences.clear();
        assert_ne!(k, CacheKey::for_sample(&other, 0));
        assert_eq!(k.digest.len(), 64);
    }

    #[test]
    fn corrupt_entries_are_refetched() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedModel::new(model(), dir.path()).unwrap();
        cached.complete(&request(1)).unwrap();
        let key = CacheKey::for_sample(&request(1), 0);
        std::fs::write(cached.path_for(&key), b"{not json").unwrap();
        let again = cached.complete(&request(1)).unwrap();
        assert!(!again.cache_hit);
        assert_eq!(again.samples, ["a"]);
    }
}
