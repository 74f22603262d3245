//! Retained thoughts and the confidence filters applied to them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{CoreError, Result};
use crate::format::TaskFormat;
use crate::metrics::answer_matches_gold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySource {
    SelfGenerated,
    GoldFiltered,
}

/// A question with the one reasoning path kept for it and the vote statistics
/// that reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub question_id: String,
    pub question_text: String,
    pub rationale_text: String,
    pub answer: String,
    pub entropy: f64,
    pub max_p: f64,
    pub n_effective: usize,
    pub source: MemorySource,
    pub embedding: Option<EmbeddingVector>,
    pub cluster_id: Option<usize>,
}

/// Keeps entries with `entropy <= tau`, preserving order. `tau` may be infinite.
pub fn filter_by_entropy(entries: &[MemoryEntry], tau: f64) -> Result<Vec<MemoryEntry>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(CoreError::Precondition(format!(
            "entropy threshold must be >= 0, got {tau}"
        )));
    }
    Ok(entries.iter().filter(|e| e.entropy <= tau).cloned().collect())
}

/// Keeps entries whose winner share is at least `rho`, boundary inclusive.
pub fn filter_by_max_p(entries: &[MemoryEntry], rho: f64) -> Result<Vec<MemoryEntry>> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(CoreError::Precondition(format!(
            "max-p threshold must be in (0, 1], got {rho}"
        )));
    }
    Ok(entries.iter().filter(|e| e.max_p >= rho).cloned().collect())
}

/// Keeps entries whose answer agrees with the gold label and marks them
/// as gold-filtered.
pub fn filter_by_gold(
    entries: &[MemoryEntry],
    golds: &BTreeMap<String, Vec<String>>,
    format: &TaskFormat,
) -> Result<Vec<MemoryEntry>> {
    let mut kept = Vec::new();
    for entry in entries {
        let gold = golds
            .get(&entry.question_id)
            .filter(|g| !g.is_empty())
            .ok_or_else(|| CoreError::Configuration(format!("no gold answer for question {}", entry.question_id)))?;
        if answer_matches_gold(&entry.answer, gold, format) {
            let mut e = entry.clone();
            e.source = MemorySource::GoldFiltered;
            kept.push(e);
        }
    }
    Ok(kept)
}
