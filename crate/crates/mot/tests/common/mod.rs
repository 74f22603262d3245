#![allow(dead_code)]
pub mod world;

use std::collections::BTreeMap;
use std::path::PathBuf;

use mot::demos;
use mot_core::prompt::{assemble_prompt, DecodeSettings};
use mot_core::retrieval::render_retrieval_prompt;
use mot_core::{InferenceMode, ModeKind, Split, TaskFormat, TaskItem};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(golden_dir().join(name)).unwrap()
}

/// Splits `stem Answer Choices: (A) x (B) y` back into stem and options.
pub fn item_from_shown(id: &str, shown: &str) -> TaskItem {
    let (text, choices) = match shown.split_once(" Answer Choices: ") {
        Some((stem, rest)) => {
            let mut choices = Vec::new();
            for part in rest.split(" (").map(|p| p.trim_start_matches('(')) {
                let (letter, option) = part.split_once(") ").unwrap();
                choices.push((letter.to_string(), option.to_string()));
            }
            (stem.to_string(), choices)
        }
        None => (shown.to_string(), Vec::new()),
    };
    let format = if choices.is_empty() {
        TaskFormat::abstractive()
    } else {
        TaskFormat::letters(choices.len()).unwrap()
    };
    TaskItem {
        question_id: id.into(),
        question_text: text,
        choices,
        gold_answers: Vec::new(),
        format,
        split: Split::Unlabeled,
        triggers: Vec::new(),
    }
}

pub fn golden_questions() -> BTreeMap<String, String> {
    serde_json::from_str(&golden("questions.json")).unwrap()
}

pub fn settings() -> DecodeSettings {
    DecodeSettings {
        model_id: "golden".into(),
        max_tokens: 512,
    }
}

pub fn render_few_shot(set: &str) -> String {
    let question = &golden_questions()[set];
    let item = item_from_shown(set, question);
    let demos = demos::builtin(set).unwrap();
    let req = assemble_prompt(&demos, &item, &InferenceMode::greedy(ModeKind::FewShotCot), &settings()).unwrap();
    assert_eq!(req.messages.len(), 1);
    req.messages[0].text.clone()
}

#[derive(serde::Deserialize)]
pub struct RetrievalInput {
    pub target: String,
    pub candidates: Vec<String>,
}

pub fn render_retrieval_10() -> String {
    let input: RetrievalInput = serde_json::from_str(&golden("retrieval_10_input.json")).unwrap();
    render_retrieval_prompt(&input.target, &input.candidates)
        .unwrap()
        .rendered_text
}

pub const FEW_SHOT_SETS: [&str; 8] = ["aqua", "drop", "anli", "comv", "obqa", "boolq", "factck", "wikiqa"];
