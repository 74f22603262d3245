//! Deterministic offline backends.
//!
//! `ScriptedModel` recognizes the prompt shapes the pipeline produces
//! (answering, zero-shot extraction, memory selection) and replies from a
//! list of rules. Its output depends only on the request and sample index.

use std::collections::BTreeMap;
use std::path::Path;

use mot_core::parse::ZERO_SHOT_ANSWER_TRIGGER;
use mot_core::prompt::ZERO_SHOT_COT_CUE;
use mot_core::seed::{derive_seed, rng_from_seed};
use mot_core::{CompletionRequest, EmbeddingVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_embed_inputs, CallStats, Decoded, Embedder, LanguageModel, Meter};
use crate::error::BackendError;

const TARGET_HEADER: &str = "\n\nTarget Question:\n";
const REFERENCE_HEADER: &str = "\n\nReference Questions:\n";
const CLOSING_START: &str = "\n\nWhich one of the above reference questions";

/// A demonstration as seen in an answering prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoView {
    pub question: String,
    /// Everything after `A: `.
    pub completion: String,
}

/// What a request asks for, recovered from its prompt text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptCall {
    Retrieval {
        target: String,
        candidates: Vec<String>,
    },
    Extraction {
        question: String,
        rationale: String,
    },
    Answer {
        question: String,
        demos: Vec<DemoView>,
        prefix: Option<String>,
        step_by_step: bool,
    },
    Other {
        text: String,
    },
}

impl ScriptCall {
    pub fn classify(request: &CompletionRequest) -> ScriptCall {
        let text = request.prompt_text();
        let prefix = request.assistant_prefix().map(str::to_string);
        if let Some(call) = classify_retrieval(&text) {
            return call;
        }
        if let Some(call) = classify_extraction(&text) {
            return call;
        }
        classify_answer(&text, prefix).unwrap_or(ScriptCall::Other { text })
    }

    pub fn question(&self) -> Option<&str> {
        match self {
            ScriptCall::Retrieval { target, .. } => Some(target),
            ScriptCall::Extraction { question, .. } | ScriptCall::Answer { question, .. } => Some(question),
            ScriptCall::Other { .. } => None,
        }
    }
}

fn classify_retrieval(text: &str) -> Option<ScriptCall> {
    let start = text.find(TARGET_HEADER)? + TARGET_HEADER.len();
    let refs = start + text[start..].find(REFERENCE_HEADER)?;
    let target = text[start..refs].to_string();
    let body_end = text.rfind(CLOSING_START)?;
    let mut body = &text[refs + REFERENCE_HEADER.len()..body_end + 2];
    let mut candidates = Vec::new();
    let mut index = 1;
    while !body.is_empty() {
        let head = format!("{index}.\nQ: ");
        body = body.strip_prefix(head.as_str())?;
        let next = format!("\n\n{}.\nQ: ", index + 1);
        let end = match body.find(next.as_str()) {
            Some(end) => end,
            None => body.len().checked_sub(2)?,
        };
        candidates.push(body[..end].to_string());
        body = &body[end + 2..];
        index += 1;
    }
    Some(ScriptCall::Retrieval { target, candidates })
}

fn classify_extraction(text: &str) -> Option<ScriptCall> {
    let head = text.strip_suffix(&format!("\n{ZERO_SHOT_ANSWER_TRIGGER}"))?;
    let cue = format!("\nA: {ZERO_SHOT_COT_CUE}");
    let cue_at = head.rfind(&cue)?;
    let q_at = head[..cue_at].rfind("Q: ")?;
    Some(ScriptCall::Extraction {
        question: head[q_at + 3..cue_at].to_string(),
        rationale: head[cue_at + cue.len()..].trim().to_string(),
    })
}

fn classify_answer(text: &str, prefix: Option<String>) -> Option<ScriptCall> {
    let (body, step_by_step) = match text.strip_suffix(&format!("\nA: {ZERO_SHOT_COT_CUE}")) {
        Some(b) => (b, true),
        None => (text.strip_suffix("\nA:")?, false),
    };
    let (demo_part, question) = match body.rfind("\n\nQ: ") {
        Some(at) => (&body[..at], &body[at + 5..]),
        None => ("", body.strip_prefix("Q: ")?),
    };
    let mut demos = Vec::new();
    if !demo_part.is_empty() {
        let demo_part = demo_part.strip_prefix("Q: ")?;
        for block in demo_part.split("\n\nQ: ") {
            let (q, a) = block.split_once("\nA: ")?;
            demos.push(DemoView {
                question: q.to_string(),
                completion: a.to_string(),
            });
        }
    }
    Some(ScriptCall::Answer {
        question: question.to_string(),
        demos,
        prefix,
        step_by_step,
    })
}

type Rule = Box<dyn Fn(&ScriptCall, &CompletionRequest, usize) -> Option<String> + Send + Sync>;

pub struct ScriptedModel {
    model_id: String,
    rules: Vec<Rule>,
    meter: Meter,
}

impl ScriptedModel {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            rules: Vec::new(),
            meter: Meter::default(),
        }
    }

    /// Adds a rule; earlier rules take precedence.
    pub fn rule<F>(mut self, rule: F) -> Self
    where
        F: Fn(&ScriptCall, &CompletionRequest, usize) -> Option<String> + Send + Sync + 'static,
    {
        self.rules.push(Box::new(rule));
        self
    }

    /// Answering calls for `question` (as shown in the prompt, choices
    /// included) return `samples[i % len]` for sample `i`.
    pub fn answers(self, question: impl Into<String>, samples: Vec<String>) -> Self {
        let question = question.into();
        assert!(!samples.is_empty(), "scripted answers need at least one sample");
        self.rule(move |call, _, i| match call {
            ScriptCall::Answer { question: q, .. } if *q == question => Some(samples[i % samples.len()].clone()),
            _ => None,
        })
    }

    /// Every memory-selection call receives `reply`.
    pub fn retrieval_reply(self, reply: impl Into<String>) -> Self {
        let reply = reply.into();
        self.rule(move |call, _, _| matches!(call, ScriptCall::Retrieval { .. }).then(|| reply.clone()))
    }

    /// Zero-shot extraction calls for `question` return `reply`.
    pub fn extraction(self, question: impl Into<String>, reply: impl Into<String>) -> Self {
        let (question, reply) = (question.into(), reply.into());
        self.rule(move |call, _, _| match call {
            ScriptCall::Extraction { question: q, .. } if *q == question => Some(reply.clone()),
            _ => None,
        })
    }

    /// Reply for any call no other rule handles.
    pub fn fallback(self, reply: impl Into<String>) -> Self {
        let reply = reply.into();
        self.rule(move |_, _, _| Some(reply.clone()))
    }

    pub fn from_script(model_id: impl Into<String>, script: ScriptFile) -> Self {
        let mut model = Self::new(model_id);
        for (question, samples) in script.answers {
            if !samples.is_empty() {
                model = model.answers(question, samples);
            }
        }
        for (question, reply) in script.extractions {
            model = model.extraction(question, reply);
        }
        if let Some(reply) = script.retrieval {
            model = model.retrieval_reply(reply);
        }
        if let Some(reply) = script.fallback {
            model = model.fallback(reply);
        }
        model
    }

    fn reply(&self, call: &ScriptCall, request: &CompletionRequest, index: usize) -> Result<String, BackendError> {
        self.rules
            .iter()
            .find_map(|rule| rule(call, request, index))
            .ok_or_else(|| BackendError::Configuration(format!("no script entry for {}", describe(call))))
    }
}

fn describe(call: &ScriptCall) -> String {
    let snippet = |s: &str| s.chars().take(80).collect::<String>();
    match call {
        ScriptCall::Retrieval { target, .. } => format!("memory selection for {:?}", snippet(target)),
        ScriptCall::Extraction { question, .. } => format!("answer extraction for {:?}", snippet(question)),
        ScriptCall::Answer { question, .. } => format!("question {:?}", snippet(question)),
        ScriptCall::Other { text } => format!("prompt {:?}", snippet(text)),
    }
}

impl LanguageModel for ScriptedModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn decode(&self, request: &CompletionRequest, indices: &[usize]) -> Result<Decoded, BackendError> {
        let call = ScriptCall::classify(request);
        let samples = indices
            .iter()
            .map(|&i| self.reply(&call, request, i))
            .collect::<Result<Vec<_>, _>>()?;
        self.meter.record_request(samples.len());
        Ok(Decoded { samples, usage: None })
    }

    fn stats(&self) -> CallStats {
        self.meter.snapshot()
    }
}

/// JSON script for the command line's scripted backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    /// Question as shown in the prompt → sampled completions.
    #[serde(default)]
    pub answers: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub extractions: BTreeMap<String, String>,
    #[serde(default)]
    pub retrieval: Option<String>,
    #[serde(default)]
    pub fallback: Option<String>,
}

impl ScriptFile {
    pub fn load(path: &Path) -> crate::error::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| crate::error::Error::Config(format!("script {}: {e}", path.display())))
    }
}

pub const SCRIPTED_EMBED_DIM: usize = 64;
const EMBED_SEED: u64 = 0x6d6f_745f_656d_6264;

/// Bag-of-tokens embedder: each lowercase alphanumeric token maps to a
/// fixed Gaussian vector seeded by its hash, and a text embeds to the
/// normalized sum over its tokens.
#[derive(Debug, Clone)]
pub struct ScriptedEmbedder {
    id: String,
    dim: usize,
}

impl ScriptedEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            id: format!("scripted-bag-{dim}"),
            dim,
        }
    }

    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let mut rng = rng_from_seed(derive_seed(EMBED_SEED, token));
        for v in acc.iter_mut() {
            let x: f64 = rng.sample(StandardNormal);
            *v += x;
        }
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let lowered = text.to_lowercase();
        let mut acc = vec![0.0; self.dim];
        let mut any = false;
        for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            self.token_vector(token, &mut acc);
            any = true;
        }
        if !any {
            self.token_vector(lowered.trim(), &mut acc);
        }
        EmbeddingVector::normalized(acc).map_err(|e| BackendError::Internal(e.to_string()))
    }
}

impl Default for ScriptedEmbedder {
    fn default() -> Self {
        Self::new(SCRIPTED_EMBED_DIM)
    }
}

impl Embedder for ScriptedEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        check_embed_inputs(texts)?;
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}
