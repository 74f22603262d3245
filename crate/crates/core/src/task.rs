use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::format::{FormatKind, ParsedAnswer, TaskFormat};
use crate::parse::{parse_answer, DEFAULT_TRIGGERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Unlabeled,
    Test,
}

/// One question, with gold answers when it is used for evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskItem {
    pub question_id: String,
    pub question_text: String,
    /// Ordered `(letter, text)` options for multi-choice items.
    #[serde(default)]
    pub choices: Vec<(String, String)>,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    pub format: TaskFormat,
    pub split: Split,
    /// Answer triggers for this item; empty means the default list.
    #[serde(default)]
    pub triggers: Vec<String>,
}

impl TaskItem {
    pub fn validate(&self) -> Result<()> {
        if self.question_id.trim().is_empty() {
            return Err(CoreError::Precondition("question_id is empty".into()));
        }
        if self.question_text.trim().is_empty() {
            return Err(CoreError::Precondition(format!(
                "question {} has no text",
                self.question_id
            )));
        }
        self.format.validate()?;
        if self.split == Split::Test && self.gold_answers.is_empty() {
            return Err(CoreError::Precondition(format!(
                "test item {} carries no gold answer",
                self.question_id
            )));
        }
        match self.format.kind {
            FormatKind::MultiChoice => {
                if self.choices.is_empty() {
                    return Err(CoreError::Precondition(format!(
                        "multi-choice item {} has no choices",
                        self.question_id
                    )));
                }
                let letters: Vec<&str> = self.choices.iter().map(|(l, _)| l.as_str()).collect();
                let labels: Vec<&str> = self.format.label_set.iter().map(String::as_str).collect();
                if letters != labels {
                    return Err(CoreError::Precondition(format!(
                        "choices of {} do not match labels {:?}",
                        self.question_id, labels
                    )));
                }
            }
            _ => {
                if !self.choices.is_empty() {
                    return Err(CoreError::Precondition(format!(
                        "item {} has choices but is not multi-choice",
                        self.question_id
                    )));
                }
            }
        }
        for gold in &self.gold_answers {
            if self.format.canonicalize(gold).as_deref() != Some(gold.as_str()) {
                return Err(CoreError::Precondition(format!(
                    "gold answer {gold:?} of {} is not canonical for its format",
                    self.question_id
                )));
            }
        }
        Ok(())
    }

    /// Question as shown to the model, with options appended for
    /// multi-choice items: `... Answer Choices: (A) x (B) y`.
    pub fn prompt_text(&self) -> String {
        if self.choices.is_empty() {
            return self.question_text.clone();
        }
        let mut text = format!("{} Answer Choices:", self.question_text);
        for (letter, choice) in &self.choices {
            text.push_str(&format!(" ({letter}) {choice}"));
        }
        text
    }

    pub fn triggers(&self) -> Vec<&str> {
        if self.triggers.is_empty() {
            DEFAULT_TRIGGERS.to_vec()
        } else {
            self.triggers.iter().map(String::as_str).collect()
        }
    }

    pub fn parse(&self, raw: &str) -> ParsedAnswer {
        parse_answer(raw, &self.format, &self.triggers())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn item() -> TaskItem {
        TaskItem {
            question_id: "q1".into(),
            question_text: "Poison causes harm to which of the following?".into(),
            choices: vec![("A".into(), "a Tree".into()), ("B".into(), "a robot".into())],
            gold_answers: vec!["A".into()],
            format: TaskFormat::letters(2).unwrap(),
            split: Split::Test,
            triggers: vec![],
        }
    }

    #[test]
    fn prompt_text_lists_choices() {
        assert_eq!(
            item().prompt_text(),
            "Poison causes harm to which of the following? Answer Choices: (A) a Tree (B) a robot"
        );
    }

    #[test]
    fn validation() {
        assert!(item().validate().is_ok());
        let mut no_gold = item();
        no_gold.gold_answers.clear();
        assert!(no_gold.validate().is_err());
        no_gold.split = Split::Unlabeled;
        assert!(no_gold.validate().is_ok());
        let mut no_choices = item();
        no_choices.choices.clear();
        assert!(no_choices.validate().is_err());
        let mut bad_gold = item();
        bad_gold.gold_answers = vec!["(A)".into()];
        assert!(bad_gold.validate().is_err());
    }
}
