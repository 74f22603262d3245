//! The prompt that asks the model to pick the most helpful reference
//! question, and the parser for its reply.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

const CLOSING_INSTRUCTION: &str = "Which one of the above reference questions is the most helpful question for you to answer the target question? You must choose exactly one reference question to you answer the target question. Your response must end in this format: \"The most helpful question is question [index].\". For example, if question 5 is your answer, you must end in \"The most helpful question is question 5.\"";

const CHOICE_PATTERN: &str = "most helpful question is question";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalPrompt {
    pub target_question: String,
    pub candidate_questions: Vec<String>,
    pub rendered_text: String,
}

/// Renders the selection prompt. Candidates are shown as questions only,
/// numbered from 1, and embedded verbatim.
pub fn render_retrieval_prompt<S: AsRef<str>>(target: &str, candidates: &[S]) -> Result<RetrievalPrompt> {
    if candidates.is_empty() {
        return Err(CoreError::Precondition(
            "retrieval prompt needs at least one candidate".into(),
        ));
    }
    let mut text = format!(
        "I will provide you with a target question and {} reference questions. I need you to choose a reference question from \"Reference Questions\", whose question, train of thought or answer would be most helpful for you to answer the target question. Please note that the following reference QA pairs are presented in a random order without any prioritization.\n\nTarget Question:\n{target}\n\nReference Questions:\n",
        candidates.len()
    );
    for (i, candidate) in candidates.iter().enumerate() {
        text.push_str(&format!("{}.\nQ: {}\n\n", i + 1, candidate.as_ref()));
    }
    text.push_str(CLOSING_INSTRUCTION);
    Ok(RetrievalPrompt {
        target_question: target.into(),
        candidate_questions: candidates.iter().map(|c| String::from(c.as_ref())).collect(),
        rendered_text: text,
    })
}

/// 1-based index named by the last "most helpful question is question N"
/// in `raw`, or `None` if absent or outside `1..=num_candidates`.
pub fn parse_retrieval_choice(raw: &str, num_candidates: usize) -> Option<usize> {
    let lowered = raw.to_ascii_lowercase();
    let mut chosen = None;
    let mut from = 0;
    while let Some(offset) = lowered[from..].find(CHOICE_PATTERN) {
        let after = from + offset + CHOICE_PATTERN.len();
        let rest = lowered[after..].trim_start();
        let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
        if let Ok(index) = digits.parse::<usize>() {
            chosen = Some(index);
        }
        from = after;
    }
    chosen.filter(|&i| (1..=num_candidates).contains(&i))
}
