//! Completion requests, demonstrations and answering-prompt assembly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::format::TaskFormat;
use crate::memory::MemoryEntry;
use crate::parse::{parse_answer, DEFAULT_TRIGGERS};
use crate::task::TaskItem;

pub const ZERO_SHOT_COT_CUE: &str = "Let's think step by step.";
pub const DIRECT_ANSWER_PREFIX: &str = "The answer is";
pub const DEMO_TRIGGER: &str = "The answer is";
pub const DEFAULT_STOP: &str = "\nQ:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    /// Forced start of the model's output; must be the last message.
    AssistantPrefix,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant_prefix(text: impl Into<String>) -> Self {
        Self {
            role: Role::AssistantPrefix,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub num_samples: usize,
    pub max_tokens: usize,
    pub stop_sequences: Vec<String>,
    pub model_id: String,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(CoreError::Precondition("num_samples must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(CoreError::Precondition(format!(
                "temperature must be a non-negative real, got {}",
                self.temperature
            )));
        }
        if self.temperature == 0.0 && self.num_samples != 1 {
            return Err(CoreError::Precondition(format!(
                "greedy decoding yields one path, but {} samples were requested",
                self.num_samples
            )));
        }
        if self.max_tokens == 0 {
            return Err(CoreError::Precondition("max_tokens must be at least 1".into()));
        }
        if self.messages.is_empty() {
            return Err(CoreError::Precondition("request has no messages".into()));
        }
        let prefix_positions: Vec<usize> = self
            .messages
            .iter()
            .enumerate()
            .filter(|(_, m)| m.role == Role::AssistantPrefix)
            .map(|(i, _)| i)
            .collect();
        if prefix_positions.len() > 1 || prefix_positions.first().is_some_and(|&i| i + 1 != self.messages.len()) {
            return Err(CoreError::Precondition(
                "an assistant prefix must be the single last message".into(),
            ));
        }
        Ok(())
    }

    pub fn assistant_prefix(&self) -> Option<&str> {
        self.messages
            .last()
            .filter(|m| m.role == Role::AssistantPrefix)
            .map(|m| m.text.as_str())
    }

    /// Concatenated user-visible prompt text (system and user messages).
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role != Role::AssistantPrefix)
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Decoding settings shared by every request of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeSettings {
    pub model_id: String,
    pub max_tokens: usize,
}

impl DecodeSettings {
    /// A single greedy decode of `text`.
    pub fn greedy(&self, text: impl Into<String>) -> CompletionRequest {
        CompletionRequest {
            messages: vec![Message::user(text)],
            temperature: 0.0,
            num_samples: 1,
            max_tokens: self.max_tokens,
            stop_sequences: vec![DEFAULT_STOP.to_string()],
            model_id: self.model_id.clone(),
        }
    }
}

/// A solved example shown before the question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub question_text: String,
    #[serde(default)]
    pub rationale_text: String,
    /// Answer as it should appear in the prompt, e.g. "(A)" or "21 yards".
    pub answer_text: String,
    /// Phrase introducing the answer after a rationale. Some published
    /// demonstrations close with "So the answer is" instead of the default.
    #[serde(default = "default_demo_trigger")]
    pub answer_trigger: String,
}

fn default_demo_trigger() -> String {
    DEMO_TRIGGER.to_string()
}

impl Demonstration {
    pub fn new(question: impl Into<String>, rationale: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            question_text: question.into(),
            rationale_text: rationale.into(),
            answer_text: answer.into(),
            answer_trigger: default_demo_trigger(),
        }
    }

    /// Turns a retained thought into a demonstration.
    ///
    /// The stored path ends with its own answer statement; the text before
    /// the last trigger becomes the rationale and the trigger phrase is kept,
    /// so rendering reproduces the original path.
    pub fn from_memory(entry: &MemoryEntry, format: &TaskFormat) -> Self {
        let parsed = parse_answer(&entry.rationale_text, format, &DEFAULT_TRIGGERS);
        let trigger = parsed.trigger_used.as_str();
        let (rationale, trigger) = match entry.rationale_text.rfind(trigger).filter(|_| !trigger.is_empty()) {
            Some(pos) => (entry.rationale_text[..pos].trim(), trigger),
            None => (entry.rationale_text.trim(), DEMO_TRIGGER),
        };
        Self {
            question_text: entry.question_text.clone(),
            rationale_text: rationale.to_string(),
            answer_text: format.display_answer(&entry.answer),
            answer_trigger: trigger.to_string(),
        }
    }

    /// `Q: <question>\nA: <rationale> The answer is <answer>.`; the rationale
    /// part is omitted when empty or not wanted.
    pub fn render(&self, with_rationale: bool) -> String {
        let rationale = self.rationale_text.trim();
        if with_rationale && !rationale.is_empty() {
            format!(
                "Q: {}\nA: {} {} {}.",
                self.question_text, rationale, self.answer_trigger, self.answer_text
            )
        } else {
            format!("Q: {}\nA: {} {}.", self.question_text, DEMO_TRIGGER, self.answer_text)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    FewShotCot,
    ZeroShotCot,
    ZeroShotDirect,
    FewShotDirect,
    Mot,
    MotNoRationale,
    MotNoThinking,
}

impl ModeKind {
    pub const ALL: [ModeKind; 7] = [
        ModeKind::ZeroShotDirect,
        ModeKind::FewShotDirect,
        ModeKind::ZeroShotCot,
        ModeKind::FewShotCot,
        ModeKind::MotNoRationale,
        ModeKind::MotNoThinking,
        ModeKind::Mot,
    ];

    pub fn uses_memory(self) -> bool {
        matches!(self, Self::Mot | Self::MotNoRationale | Self::MotNoThinking)
    }

    pub fn uses_static_demos(self) -> bool {
        matches!(self, Self::FewShotCot | Self::FewShotDirect)
    }

    pub fn is_zero_shot(self) -> bool {
        matches!(self, Self::ZeroShotCot | Self::ZeroShotDirect)
    }

    fn shows_rationales(self) -> bool {
        matches!(self, Self::FewShotCot | Self::Mot | Self::MotNoThinking)
    }

    fn forced_prefix(self) -> Option<&'static str> {
        match self {
            Self::MotNoThinking | Self::ZeroShotDirect => Some(DIRECT_ANSWER_PREFIX),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FewShotCot => "few_shot_cot",
            Self::ZeroShotCot => "zero_shot_cot",
            Self::ZeroShotDirect => "zero_shot_direct",
            Self::FewShotDirect => "few_shot_direct",
            Self::Mot => "mot",
            Self::MotNoRationale => "mot_no_rationale",
            Self::MotNoThinking => "mot_no_thinking",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistency {
    pub num_paths: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceMode {
    pub kind: ModeKind,
    #[serde(default)]
    pub self_consistency: Option<SelfConsistency>,
}

impl InferenceMode {
    pub fn greedy(kind: ModeKind) -> Self {
        Self {
            kind,
            self_consistency: None,
        }
    }
}

/// Builds the answering request for `question`.
///
/// Demonstrations are rendered in order and separated by a blank line, then
/// the question is framed as `Q: ...\nA:`.
pub fn assemble_prompt(
    demos: &[Demonstration],
    question: &TaskItem,
    mode: &InferenceMode,
    settings: &DecodeSettings,
) -> Result<CompletionRequest> {
    let kind = mode.kind;
    if kind.is_zero_shot() && !demos.is_empty() {
        return Err(CoreError::Configuration(format!(
            "{} takes no demonstrations",
            kind.name()
        )));
    }
    if !kind.is_zero_shot() && demos.is_empty() {
        return Err(CoreError::Configuration(format!(
            "{} needs at least one demonstration",
            kind.name()
        )));
    }

    let mut text = String::new();
    for demo in demos {
        text.push_str(&demo.render(kind.shows_rationales()));
        text.push_str("\n\n");
    }
    text.push_str(&format!("Q: {}\nA:", question.prompt_text()));
    if kind == ModeKind::ZeroShotCot {
        text.push(' ');
        text.push_str(ZERO_SHOT_COT_CUE);
    }

    let mut messages = vec![Message::user(text)];
    if let Some(prefix) = kind.forced_prefix() {
        messages.push(Message::assistant_prefix(prefix));
    }
    let (temperature, num_samples) = match mode.self_consistency {
        Some(sc) => (sc.temperature, sc.num_paths),
        None => (0.0, 1),
    };
    let request = CompletionRequest {
        messages,
        temperature,
        num_samples,
        max_tokens: settings.max_tokens,
        stop_sequences: vec![DEFAULT_STOP.to_string()],
        model_id: settings.model_id.clone(),
    };
    request.validate()?;
    Ok(request)
}

/// Second zero-shot pass: the first-pass rationale followed by the answer
/// trigger, decoded greedily.
pub fn assemble_extraction_prompt(
    question: &TaskItem,
    rationale: &str,
    settings: &DecodeSettings,
) -> CompletionRequest {
    let rationale = rationale.trim();
    let mut text = format!("Q: {}\nA: {}", question.prompt_text(), ZERO_SHOT_COT_CUE);
    if !rationale.is_empty() {
        text.push(' ');
        text.push_str(rationale);
    }
    text.push('\n');
    text.push_str(crate::parse::ZERO_SHOT_ANSWER_TRIGGER);
    settings.greedy(text)
}
