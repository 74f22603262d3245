//! Answering test questions in every supported mode.

use std::time::Instant;

use mot_core::parse::{parse_answer, ZERO_SHOT_ANSWER_TRIGGER};
use mot_core::prompt::{assemble_extraction_prompt, assemble_prompt, DecodeSettings};
use mot_core::seed::derive_seed;
use mot_core::vote::majority_vote;
use mot_core::{
    Demonstration, InferenceMode, MemoryPool, ModeKind, ParsedAnswer, TaskItem, ThoughtSample, VoteSummary,
};
use serde::{Deserialize, Serialize};

use crate::backend::{Embedder, LanguageModel};
use crate::error::{Error, Result};
use crate::exec::{bounded_map, DEFAULT_MAX_IN_FLIGHT};
use crate::recall::{
    recall_memories, recall_random, recall_semantic_only, RecallStrategy, RetrievalChoice, RetrievalTranscript,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub mode: InferenceMode,
    pub settings: DecodeSettings,
    /// Candidates per cluster shown to the model.
    pub k: usize,
    pub recall: RecallStrategy,
    /// How many recalled memories to show, in cluster order; all when unset.
    pub demo_count: Option<usize>,
    pub seed: u64,
    pub max_in_flight: usize,
    /// Keep memory-selection transcripts on each prediction.
    pub trace: bool,
}

impl InferenceConfig {
    pub fn new(mode: InferenceMode, model_id: impl Into<String>) -> Self {
        Self {
            mode,
            settings: DecodeSettings {
                model_id: model_id.into(),
                max_tokens: 512,
            },
            k: 10,
            recall: RecallStrategy::Llm,
            demo_count: None,
            seed: 0,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            trace: false,
        }
    }
}

/// Everything an answer may draw on.
#[derive(Clone, Copy)]
pub struct AnswerContext<'a> {
    pub model: &'a dyn LanguageModel,
    pub embedder: Option<&'a dyn Embedder>,
    pub pool: Option<&'a MemoryPool>,
    pub demos: &'a [Demonstration],
    pub config: &'a InferenceConfig,
}

impl AnswerContext<'_> {
    /// Rejects mode and input combinations that cannot work.
    pub fn check(&self) -> Result<()> {
        let kind = self.config.mode.kind;
        if kind.uses_memory() {
            if self.pool.is_none_or(MemoryPool::is_empty) {
                return Err(Error::Config(format!("{} needs a memory pool", kind.name())));
            }
            if self.config.recall != RecallStrategy::Random && self.embedder.is_none() {
                return Err(Error::Config(format!("{} needs an embedder", kind.name())));
            }
            if self.config.demo_count == Some(0) {
                return Err(Error::Config("demo_count must be at least 1".into()));
            }
        }
        if kind.uses_static_demos() && self.demos.is_empty() {
            return Err(Error::Config(format!("{} needs demonstrations", kind.name())));
        }
        if let Some(sc) = self.config.mode.self_consistency {
            if sc.num_paths == 0 {
                return Err(Error::Config("self-consistency needs at least one path".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub mode: ModeKind,
    /// Completions as produced, forced prefix included.
    pub raw_paths: Vec<String>,
    pub parsed: ParsedAnswer,
    pub vote: Option<VoteSummary>,
    pub recalled: Option<Vec<RetrievalChoice>>,
    /// Set when the item failed; failed items score zero.
    pub error: Option<String>,
    pub timing_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<RetrievalTranscript>,
}

impl Prediction {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

struct Paths {
    raw: Vec<String>,
    parsed: Vec<ParsedAnswer>,
}

fn recall(question: &TaskItem, ctx: &AnswerContext<'_>) -> Result<(Vec<RetrievalChoice>, Vec<RetrievalTranscript>)> {
    let pool = ctx.pool.ok_or_else(|| Error::Config("memory pool missing".into()))?;
    let text = question.prompt_text();
    let embedder = || ctx.embedder.ok_or_else(|| Error::Config("embedder missing".into()));
    match ctx.config.recall {
        RecallStrategy::Llm => {
            let out = recall_memories(pool, &text, embedder()?, ctx.model, ctx.config.k, &ctx.config.settings)?;
            Ok((out.choices, out.transcripts))
        }
        RecallStrategy::Semantic => Ok((recall_semantic_only(pool, &text, embedder()?)?, Vec::new())),
        RecallStrategy::Random => Ok((
            recall_random(pool, derive_seed(ctx.config.seed, &question.question_id))?,
            Vec::new(),
        )),
    }
}

fn with_prefix(prefix: Option<&str>, completion: String) -> String {
    match prefix {
        None => completion,
        Some(p) if completion.is_empty() || completion.starts_with(char::is_whitespace) => format!("{p}{completion}"),
        Some(p) => format!("{p} {completion}"),
    }
}

fn decode_paths(question: &TaskItem, demos: &[Demonstration], ctx: &AnswerContext<'_>) -> Result<Paths> {
    let request = assemble_prompt(demos, question, &ctx.config.mode, &ctx.config.settings)?;
    let prefix = request.assistant_prefix().map(str::to_string);
    let result = ctx.model.complete(&request)?;
    let mut paths = Paths {
        raw: Vec::new(),
        parsed: Vec::new(),
    };
    let triggers = question.triggers();
    for completion in result.samples {
        let raw = with_prefix(prefix.as_deref(), completion);
        let two_pass = ctx.config.mode.kind == ModeKind::ZeroShotCot && !triggers.iter().any(|t| raw.contains(t));
        if two_pass {
            let extraction = assemble_extraction_prompt(question, &raw, &ctx.config.settings);
            let answer = ctx.model.complete(&extraction)?.samples.pop().unwrap_or_default();
            let tail = with_prefix(Some(ZERO_SHOT_ANSWER_TRIGGER), answer);
            paths
                .parsed
                .push(parse_answer(&tail, &question.format, &[ZERO_SHOT_ANSWER_TRIGGER]));
            let rationale = raw.trim_end();
            paths.raw.push(if rationale.is_empty() {
                tail
            } else {
                format!("{rationale}\n{tail}")
            });
        } else {
            paths.parsed.push(question.parse(&raw));
            paths.raw.push(raw);
        }
    }
    Ok(paths)
}

struct Answer {
    raw_paths: Vec<String>,
    parsed: ParsedAnswer,
    vote: Option<VoteSummary>,
}

fn answer_inner(
    question: &TaskItem,
    ctx: &AnswerContext<'_>,
    recalled: &mut Option<Vec<RetrievalChoice>>,
    trace: &mut Vec<RetrievalTranscript>,
) -> Result<Answer> {
    let kind = ctx.config.mode.kind;
    let demos: Vec<Demonstration> = if kind.uses_memory() {
        let (choices, transcripts) = recall(question, ctx)?;
        let count = ctx.config.demo_count.unwrap_or(choices.len());
        let demos = choices
            .iter()
            .take(count)
            .map(|c| Demonstration::from_memory(&c.chosen_entry, &question.format))
            .collect();
        *recalled = Some(choices);
        if ctx.config.trace {
            *trace = transcripts;
        }
        demos
    } else if kind.uses_static_demos() {
        ctx.demos.to_vec()
    } else {
        Vec::new()
    };

    let paths = decode_paths(question, &demos, ctx)?;
    if ctx.config.mode.self_consistency.is_some() {
        let samples: Vec<ThoughtSample> = paths
            .raw
            .iter()
            .zip(&paths.parsed)
            .enumerate()
            .map(|(i, (raw, parsed))| ThoughtSample {
                path_index: i,
                rationale_text: raw.clone(),
                answer: parsed.clone(),
            })
            .collect();
        let vote = majority_vote(&samples)?;
        let parsed = if vote.is_empty() {
            ParsedAnswer::unparseable("")
        } else {
            let trigger = paths
                .parsed
                .iter()
                .find(|p| p.value() == Some(vote.winner.as_str()))
                .map(|p| p.trigger_used.clone())
                .unwrap_or_default();
            ParsedAnswer::parsed(vote.winner.clone(), trigger)
        };
        Ok(Answer {
            raw_paths: paths.raw,
            parsed,
            vote: Some(vote),
        })
    } else {
        let parsed = paths
            .parsed
            .first()
            .cloned()
            .unwrap_or_else(|| ParsedAnswer::unparseable(""));
        Ok(Answer {
            raw_paths: paths.raw,
            parsed,
            vote: None,
        })
    }
}

/// Answers one question. Backend and per-item failures are recorded on the
/// prediction instead of being returned.
pub fn answer_one(question: &TaskItem, ctx: &AnswerContext<'_>) -> Prediction {
    let (mut prediction, outcome) = answer_traced(question, ctx);
    if let Err(e) = outcome {
        log::warn!("{} failed: {e}", question.question_id);
        prediction.error = Some(e.to_string());
    }
    prediction
}

/// Like [`answer_one`], but returns the failure itself.
pub fn try_answer_one(question: &TaskItem, ctx: &AnswerContext<'_>) -> Result<Prediction> {
    let (prediction, outcome) = answer_traced(question, ctx);
    outcome.map(|()| prediction)
}

fn answer_traced(question: &TaskItem, ctx: &AnswerContext<'_>) -> (Prediction, Result<()>) {
    let start = Instant::now();
    let mut recalled = None;
    let mut trace = Vec::new();
    let outcome = answer_inner(question, ctx, &mut recalled, &mut trace);
    let timing_ms = start.elapsed().as_millis() as u64;
    let mut prediction = Prediction {
        question_id: question.question_id.clone(),
        mode: ctx.config.mode.kind,
        raw_paths: Vec::new(),
        parsed: ParsedAnswer::unparseable(""),
        vote: None,
        recalled,
        error: None,
        timing_ms,
        trace,
    };
    let outcome = outcome.map(|answer| {
        prediction.raw_paths = answer.raw_paths;
        prediction.parsed = answer.parsed;
        prediction.vote = answer.vote;
    });
    (prediction, outcome)
}

/// Answers every item with bounded concurrency, in input order. Aborts
/// when more than half of the items fail.
pub fn predict_batch(items: &[TaskItem], ctx: &AnswerContext<'_>) -> Result<Vec<Prediction>> {
    ctx.check()?;
    let predictions = bounded_map(items, ctx.config.max_in_flight, |_, item| answer_one(item, ctx));
    let failed = predictions.iter().filter(|p| p.failed()).count();
    if failed * 2 > items.len() {
        return Err(Error::TooManyFailures {
            failed,
            total: items.len(),
        });
    }
    Ok(predictions)
}
