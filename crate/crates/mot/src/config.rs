//! Run configuration: a TOML document with one table per stage.

use std::path::{Path, PathBuf};

use mot_core::prompt::SelfConsistency;
use mot_core::{InferenceMode, ModeKind};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::DEFAULT_MAX_IN_FLIGHT;
use crate::harness::ConfidenceFilter;
use crate::recall::RecallStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model_id: String,
    pub embedder_id: String,
    /// Response cache; HTTP runs fall back to `.mot-cache` when unset.
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    /// Reply script for the scripted backend.
    pub script: Option<PathBuf>,
    pub embed_dim: usize,
    pub retry_attempts: u32,
    pub retry_base_delay_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            base_url: "http://localhost:8000/v1".into(),
            model_id: "gpt-3.5-turbo".into(),
            embedder_id: "all-mpnet-base-v2".into(),
            cache_dir: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            script: None,
            embed_dim: crate::backend::scripted::SCRIPTED_EMBED_DIM,
            retry_attempts: 3,
            retry_base_delay_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[default]
    Entropy,
    #[value(name = "max_p")]
    MaxP,
    Gold,
    None,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Entropy => "entropy",
            FilterKind::MaxP => "max_p",
            FilterKind::Gold => "gold",
            FilterKind::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrethinkSection {
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    /// Entropy threshold; `inf` keeps everything.
    pub tau: f64,
    pub filter: FilterKind,
    /// Max-P threshold used when `filter = "max_p"`.
    pub rho: f64,
}

impl Default for PrethinkSection {
    fn default() -> Self {
        Self {
            n: 16,
            temperature: 1.2,
            max_tokens: 512,
            tau: 0.3,
            filter: FilterKind::Entropy,
            rho: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySection {
    pub l: usize,
    pub k: usize,
    pub seed: u64,
    pub recall: RecallStrategy,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self {
            l: 4,
            k: 10,
            seed: 0,
            recall: RecallStrategy::Llm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub mode: ModeKind,
    pub self_consistency: Option<SelfConsistency>,
    pub demo_count: Option<usize>,
    /// Built-in set name or path to a JSON array of demonstrations.
    pub demos: Option<String>,
    pub max_tokens: usize,
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self {
            mode: ModeKind::Mot,
            self_consistency: None,
            demo_count: None,
            demos: None,
            max_tokens: 512,
        }
    }
}

impl InferenceSection {
    pub fn inference_mode(&self) -> InferenceMode {
        InferenceMode {
            kind: self.mode,
            self_consistency: self.self_consistency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub tasks: PathBuf,
    pub golds: Option<PathBuf>,
    pub dump: PathBuf,
    pub entries: PathBuf,
    pub pool: PathBuf,
    pub reports: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            tasks: "tasks.jsonl".into(),
            golds: None,
            dump: "out/dump.jsonl".into(),
            entries: "out/entries.jsonl".into(),
            pool: "out/pool.jsonl".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub filter: ConfidenceFilter,
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            filter: ConfidenceFilter::Entropy,
            thresholds: vec![f64::INFINITY, 0.9, 0.6, 0.3, 0.0],
            fractions: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendConfig,
    pub prethink: PrethinkSection,
    pub memory: MemorySection,
    pub inference: InferenceSection,
    pub paths: PathsSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.prethink.n == 0 {
            return fail("prethink.n must be at least 1");
        }
        if !(self.prethink.temperature >= 0.0 && self.prethink.temperature.is_finite()) {
            return fail("prethink.temperature must be a non-negative number");
        }
        if self.prethink.temperature == 0.0 && self.prethink.n > 1 {
            return fail("prethink.temperature 0 allows a single path only");
        }
        if self.prethink.tau.is_nan() || self.prethink.tau < 0.0 {
            return fail("prethink.tau must be non-negative");
        }
        if !(self.prethink.rho > 0.0 && self.prethink.rho <= 1.0) {
            return fail("prethink.rho must be in (0, 1]");
        }
        if self.memory.l == 0 || self.memory.k == 0 {
            return fail("memory.l and memory.k must be at least 1");
        }
        if self.prethink.max_tokens == 0 || self.inference.max_tokens == 0 {
            return fail("max_tokens must be at least 1");
        }
        if self.inference.demo_count == Some(0) {
            return fail("inference.demo_count must be at least 1");
        }
        if self.backend.max_in_flight == 0 {
            return fail("backend.max_in_flight must be at least 1");
        }
        Ok(())
    }
}
