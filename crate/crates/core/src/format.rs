//! Task answer formats and parsed answers.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::parse::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatKind {
    MultiChoice,
    Classification,
    Abstractive,
}

/// How answers to a task look: option letters, a closed label set, or free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFormat {
    pub kind: FormatKind,
    /// Canonical labels. Uppercase letters for multi-choice, the label
    /// vocabulary for classification, empty for abstractive tasks.
    #[serde(default)]
    pub label_set: Vec<String>,
}

impl TaskFormat {
    pub fn multi_choice<I, S>(letters: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let format = Self {
            kind: FormatKind::MultiChoice,
            label_set: letters.into_iter().map(Into::into).collect(),
        };
        format.validate()?;
        Ok(format)
    }

    /// Multi-choice format with the first `count` letters starting at `A`.
    pub fn letters(count: usize) -> Result<Self> {
        if count == 0 || count > 26 {
            return Err(CoreError::Precondition(format!(
                "multi-choice tasks need between 1 and 26 options, got {count}"
            )));
        }
        Self::multi_choice((b'A'..b'A' + count as u8).map(|b| (b as char).to_string()))
    }

    pub fn classification<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let format = Self {
            kind: FormatKind::Classification,
            label_set: labels.into_iter().map(Into::into).collect(),
        };
        format.validate()?;
        Ok(format)
    }

    pub fn abstractive() -> Self {
        Self {
            kind: FormatKind::Abstractive,
            label_set: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FormatKind::MultiChoice => {
                if self.label_set.is_empty() {
                    return Err(CoreError::Precondition(
                        "multi-choice label set must not be empty".into(),
                    ));
                }
                for label in &self.label_set {
                    let mut chars = label.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) if c.is_ascii_uppercase() => {}
                        _ => {
                            return Err(CoreError::Precondition(format!(
                                "multi-choice label {label:?} is not a letter A-Z"
                            )))
                        }
                    }
                }
            }
            FormatKind::Classification => {
                if self.label_set.is_empty() {
                    return Err(CoreError::Precondition(
                        "classification label set must not be empty".into(),
                    ));
                }
                if self.label_set.iter().any(|l| l.trim().is_empty()) {
                    return Err(CoreError::Precondition(
                        "classification labels must not be blank".into(),
                    ));
                }
            }
            FormatKind::Abstractive => {
                if !self.label_set.is_empty() {
                    return Err(CoreError::Precondition("abstractive tasks take no label set".into()));
                }
            }
        }
        Ok(())
    }

    /// Maps a gold or predicted surface form onto its canonical label.
    ///
    /// Returns `None` when the value is not a member of the label set, or is
    /// empty after normalization for abstractive tasks.
    pub fn canonicalize(&self, value: &str) -> Option<String> {
        let trimmed = value.trim();
        match self.kind {
            FormatKind::MultiChoice => {
                let inner = trimmed.trim_matches(|c: char| matches!(c, '(' | ')' | '.'));
                let upper = inner.to_ascii_uppercase();
                self.label_set.iter().find(|l| **l == upper).cloned()
            }
            FormatKind::Classification => self.label_set.iter().find(|l| l.eq_ignore_ascii_case(trimmed)).cloned(),
            FormatKind::Abstractive => {
                if normalize_text(trimmed).is_empty() {
                    None
                } else {
                    Some(trimmed.to_string())
                }
            }
        }
    }

    /// Surface form of a canonical answer inside a rendered demonstration.
    /// Option letters are shown parenthesized, as in "The answer is (B).".
    pub fn display_answer(&self, canonical: &str) -> String {
        match self.kind {
            FormatKind::MultiChoice => format!("({canonical})"),
            _ => canonical.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Parsed,
    Unparseable,
}

/// Answer extracted from one completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub status: ParseStatus,
    /// Canonical answer; empty when unparseable.
    pub value: String,
    /// The trigger phrase the value was found after; empty if none matched.
    pub trigger_used: String,
}

impl ParsedAnswer {
    pub fn parsed(value: impl Into<String>, trigger: impl Into<String>) -> Self {
        Self {
            status: ParseStatus::Parsed,
            value: value.into(),
            trigger_used: trigger.into(),
        }
    }

    pub fn unparseable(trigger: impl Into<String>) -> Self {
        Self {
            status: ParseStatus::Unparseable,
            value: String::new(),
            trigger_used: trigger.into(),
        }
    }

    pub fn is_parsed(&self) -> bool {
        self.status == ParseStatus::Parsed
    }

    /// The canonical value if parsed.
    pub fn value(&self) -> Option<&str> {
        self.is_parsed().then_some(self.value.as_str())
    }
}
