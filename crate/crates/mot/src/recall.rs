//! Picking one memory per cluster for a test question.

use mot_core::prompt::DecodeSettings;
use mot_core::retrieval::{parse_retrieval_choice, render_retrieval_prompt};
use mot_core::seed::rng_from_seed;
use mot_core::{CandidateSet, CompletionRequest, EmbeddingVector, MemoryEntry, MemoryPool, Message};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Embedder, LanguageModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMethod {
    Llm,
    SemanticFallback,
    Random,
}

/// How memories are chosen at answer time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallStrategy {
    #[default]
    Llm,
    Semantic,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalChoice {
    pub cluster_id: usize,
    /// 1-based position among the candidates when the model chose.
    pub chosen_index: Option<usize>,
    /// The chosen memory, without its embedding.
    pub chosen_entry: MemoryEntry,
    pub method: RecallMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTranscript {
    pub cluster_id: usize,
    pub prompt: String,
    pub raw_output: Option<String>,
    pub error: Option<String>,
    pub chosen_index: Option<usize>,
    pub chosen_question_id: String,
    pub method: RecallMethod,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecallOutcome {
    pub choices: Vec<RetrievalChoice>,
    pub transcripts: Vec<RetrievalTranscript>,
}

fn choice(
    cluster_id: usize,
    entry: &MemoryEntry,
    chosen_index: Option<usize>,
    method: RecallMethod,
) -> RetrievalChoice {
    let mut chosen_entry = entry.clone();
    chosen_entry.embedding = None;
    RetrievalChoice {
        cluster_id,
        chosen_index,
        chosen_entry,
        method,
    }
}

fn check_pool(pool: &MemoryPool) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::Config("memory pool is empty".into()));
    }
    Ok(())
}

fn candidate_sets<'p>(
    pool: &'p MemoryPool,
    question: &str,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<CandidateSet<'p>>> {
    check_pool(pool)?;
    if k == 0 {
        return Err(Error::Config("candidate count k must be at least 1".into()));
    }
    let query: EmbeddingVector = embedder.embed_one(question)?;
    Ok(pool
        .candidates_for(&query, k)
        .into_iter()
        .filter(|set| !set.candidates.is_empty())
        .collect())
}

/// Asks the model to choose among each cluster's top-`k` candidates. A
/// reply that names no valid candidate, or a failed call, falls back to the
/// most similar candidate.
pub fn recall_memories(
    pool: &MemoryPool,
    question: &str,
    embedder: &dyn Embedder,
    model: &dyn LanguageModel,
    k: usize,
    settings: &DecodeSettings,
) -> Result<RecallOutcome> {
    let sets = candidate_sets(pool, question, embedder, k)?;
    let mut outcome = RecallOutcome::default();
    for set in sets {
        let questions: Vec<&str> = set.candidates.iter().map(|(e, _)| e.question_text.as_str()).collect();
        let prompt = render_retrieval_prompt(question, &questions)?;
        let request = CompletionRequest {
            messages: vec![Message::user(prompt.rendered_text.clone())],
            temperature: 0.0,
            num_samples: 1,
            max_tokens: settings.max_tokens,
            stop_sequences: Vec::new(),
            model_id: settings.model_id.clone(),
        };
        let (raw, error) = match model.complete(&request) {
            Ok(mut r) => (r.samples.pop(), None),
            Err(e) => {
                log::warn!("memory selection for cluster {} failed: {e}", set.cluster_id);
                (None, Some(e.to_string()))
            }
        };
        let picked = raw.as_deref().and_then(|r| parse_retrieval_choice(r, questions.len()));
        let c = match picked {
            Some(i) => choice(set.cluster_id, set.candidates[i - 1].0, Some(i), RecallMethod::Llm),
            None => choice(
                set.cluster_id,
                set.candidates[0].0,
                None,
                RecallMethod::SemanticFallback,
            ),
        };
        outcome.transcripts.push(RetrievalTranscript {
            cluster_id: set.cluster_id,
            prompt: prompt.rendered_text,
            raw_output: raw,
            error,
            chosen_index: c.chosen_index,
            chosen_question_id: c.chosen_entry.question_id.clone(),
            method: c.method,
        });
        outcome.choices.push(c);
    }
    Ok(outcome)
}

/// The most similar memory of every cluster, without any model call.
pub fn recall_semantic_only(
    pool: &MemoryPool,
    question: &str,
    embedder: &dyn Embedder,
) -> Result<Vec<RetrievalChoice>> {
    Ok(candidate_sets(pool, question, embedder, 1)?
        .into_iter()
        .map(|set| {
            choice(
                set.cluster_id,
                set.candidates[0].0,
                None,
                RecallMethod::SemanticFallback,
            )
        })
        .collect())
}

/// One uniformly drawn member of every cluster.
pub fn recall_random(pool: &MemoryPool, seed: u64) -> Result<Vec<RetrievalChoice>> {
    check_pool(pool)?;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for cluster_id in 0..pool.l {
        let members: Vec<&MemoryEntry> = pool.cluster_members(cluster_id).collect();
        if members.is_empty() {
            continue;
        }
        let pick = members[rng.random_range(0..members.len())];
        out.push(choice(cluster_id, pick, None, RecallMethod::Random));
    }
    Ok(out)
}
