//! Pre-thinking: sample reasoning paths for unlabeled questions, vote, and
//! keep one supporting path per question.

use mot_core::prompt::{assemble_prompt, DecodeSettings, SelfConsistency};
use mot_core::seed::derive_seed;
use mot_core::vote::{majority_vote, select_retained_path};
use mot_core::{
    Demonstration, InferenceMode, MemoryEntry, MemorySource, ModeKind, TaskItem, ThoughtSample, VoteSummary,
};
use serde::{Deserialize, Serialize};

use crate::backend::LanguageModel;
use crate::error::{Error, Result};
use crate::exec::{bounded_map, DEFAULT_MAX_IN_FLIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrethinkConfig {
    pub num_paths: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Default for PrethinkConfig {
    fn default() -> Self {
        Self {
            num_paths: 16,
            temperature: 1.2,
            max_tokens: 512,
            seed: 0,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

/// One line of the raw sample dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub question_id: String,
    /// Question as shown to the model, answer choices included.
    pub question_text: String,
    pub samples: Vec<ThoughtSample>,
    pub vote: VoteSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrethinkOutput {
    pub records: Vec<SampleRecord>,
    pub entries: Vec<MemoryEntry>,
    /// Items skipped because of backend errors, with the reason.
    pub failures: Vec<(String, String)>,
}

pub fn sample_question(
    item: &TaskItem,
    demos: &[Demonstration],
    model: &dyn LanguageModel,
    config: &PrethinkConfig,
) -> Result<SampleRecord> {
    let mode = InferenceMode {
        kind: ModeKind::FewShotCot,
        self_consistency: Some(SelfConsistency {
            num_paths: config.num_paths,
            temperature: config.temperature,
        }),
    };
    let settings = DecodeSettings {
        model_id: model.model_id().to_string(),
        max_tokens: config.max_tokens,
    };
    let request = assemble_prompt(demos, item, &mode, &settings)?;
    let result = model.complete(&request)?;
    let samples: Vec<ThoughtSample> = result
        .samples
        .into_iter()
        .enumerate()
        .map(|(path_index, text)| ThoughtSample {
            path_index,
            answer: item.parse(&text),
            rationale_text: text,
        })
        .collect();
    let vote = majority_vote(&samples)?;
    Ok(SampleRecord {
        question_id: item.question_id.clone(),
        question_text: item.prompt_text(),
        samples,
        vote,
    })
}

/// Turns dump records into unfiltered memory entries. Questions without a
/// single parsed answer are dropped. The retained path is drawn with a seed
/// derived from the question id, so the result does not depend on order.
pub fn entries_from_records(records: &[SampleRecord], seed: u64) -> Result<Vec<MemoryEntry>> {
    let mut entries = Vec::new();
    for record in records.iter().filter(|r| !r.vote.is_empty()) {
        let path = select_retained_path(&record.samples, &record.vote, derive_seed(seed, &record.question_id))?;
        entries.push(MemoryEntry {
            question_id: record.question_id.clone(),
            question_text: record.question_text.clone(),
            rationale_text: path.rationale_text.clone(),
            answer: record.vote.winner.clone(),
            entropy: record.vote.entropy,
            max_p: record.vote.max_p,
            n_effective: record.vote.total_parsed,
            source: MemorySource::SelfGenerated,
            embedding: None,
            cluster_id: None,
        });
    }
    Ok(entries)
}

/// Samples every item and returns the dump records together with the
/// unfiltered entries, both in input order. Items whose backend calls fail
/// are logged and skipped; the run aborts when more than half fail.
pub fn prethink_dataset(
    items: &[TaskItem],
    demos: &[Demonstration],
    model: &dyn LanguageModel,
    config: &PrethinkConfig,
) -> Result<PrethinkOutput> {
    if items.is_empty() {
        return Err(Error::Config("no questions to pre-think".into()));
    }
    if demos.is_empty() {
        return Err(Error::Config("pre-thinking needs few-shot demonstrations".into()));
    }
    let results = bounded_map(items, config.max_in_flight, |_, item| {
        sample_question(item, demos, model, config)
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (item, result) in items.iter().zip(results) {
        match result {
            Ok(record) => records.push(record),
            Err(e) => {
                log::warn!("skipping {}: {e}", item.question_id);
                failures.push((item.question_id.clone(), e.to_string()));
            }
        }
    }
    if failures.len() * 2 > items.len() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: items.len(),
        });
    }
    let entries = entries_from_records(&records, config.seed)?;
    Ok(PrethinkOutput {
        records,
        entries,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedModel;
    use mot_core::{Split, TaskFormat};

    fn item(id: &str, q: &str) -> TaskItem {
        TaskItem {
            question_id: id.into(),
            question_text: q.into(),
            choices: vec![],
            gold_answers: vec![],
            format: TaskFormat::classification(["yes", "no"]).unwrap(),
            split: Split::Unlabeled,
            triggers: vec![],
        }
    }

    fn demos() -> Vec<Demonstration> {
        vec![Demonstration::new("Is fire hot?", "Fire burns.", "yes")]
    }

    fn config() -> PrethinkConfig {
        PrethinkConfig {
            max_in_flight: 4,
            ..PrethinkConfig::default()
        }
    }

    fn paths(yes: usize, no: usize) -> Vec<String> {
        let mut v = vec!["It is. The answer is yes.".to_string(); yes];
        v.extend(vec!["It is not. The answer is no.".to_string(); no]);
        v
    }

    #[test]
    fn unanimous_questions() {
        let mut model = ScriptedModel::new("s");
        let items: Vec<TaskItem> = (0..10)
            .map(|i| item(&format!("q{i}"), &format!("question {i}?")))
            .collect();
        for it in &items {
            model = model.answers(it.question_text.clone(), paths(16, 0));
        }
        let out = prethink_dataset(&items, &demos(), &model, &config()).unwrap();
        assert_eq!(out.entries.len(), 10);
        assert!(out
            .entries
            .iter()
            .all(|e| e.entropy == 0.0 && e.max_p == 1.0 && e.answer == "yes"));
        assert_eq!(model.stats().decoded_samples, 160);
        assert_eq!(
            out.records.iter().map(|r| r.question_id.as_str()).collect::<Vec<_>>()[3],
            "q3"
        );
    }

    #[test]
    fn split_vote_and_dropped_question() {
        let model = ScriptedModel::new("s")
            .answers("split?", paths(9, 7))
            .answers("mute?", vec!["I cannot say.".into()]);
        let items = vec![item("a", "split?"), item("b", "mute?")];
        let out = prethink_dataset(&items, &demos(), &model, &config()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.entries.len(), 1);
        let e = &out.entries[0];
        assert!((e.entropy - 0.6853142072764582).abs() < 1e-12);
        assert_eq!(e.n_effective, 16);
        assert_eq!(items[0].parse(&e.rationale_text).value(), Some("yes"));
    }

    #[test]
    fn failures_are_skipped_until_half() {
        let model = ScriptedModel::new("s").answers("ok?", paths(16, 0));
        let items = vec![item("a", "ok?"), item("b", "missing?")];
        let out = prethink_dataset(&items, &demos(), &model, &config()).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.entries.len(), 1);
        let items = vec![item("a", "ok?"), item("b", "missing?"), item("c", "gone?")];
        assert!(matches!(
            prethink_dataset(&items, &demos(), &model, &config()),
            Err(Error::TooManyFailures { failed: 2, total: 3 })
        ));
    }

    #[test]
    fn replay_from_records_is_stable() {
        let model = ScriptedModel::new("s").answers("split?", paths(9, 7));
        let out = prethink_dataset(&[item("a", "split?")], &demos(), &model, &config()).unwrap();
        assert_eq!(entries_from_records(&out.records, 0).unwrap(), out.entries);
    }
}
