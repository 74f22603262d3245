//! Final-answer extraction from raw completions.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::format::{FormatKind, ParsedAnswer, TaskFormat};

/// Triggers tried in order when a task does not configure its own.
pub const DEFAULT_TRIGGERS: [&str; 3] = ["The answer is", "Therefore, the answer is", "the answer is"];

/// Appended after a zero-shot rationale to elicit the final answer.
pub const ZERO_SHOT_ANSWER_TRIGGER: &str = "Therefore, the answer is";

pub fn default_triggers() -> Vec<String> {
    DEFAULT_TRIGGERS.iter().map(|t| t.to_string()).collect()
}

pub fn zero_shot_answer_trigger() -> &'static str {
    ZERO_SHOT_ANSWER_TRIGGER
}

/// Extracts the final answer from `raw`.
///
/// The first trigger (in list order) that occurs anywhere in `raw` wins, and
/// the text after its *last* occurrence is examined, so restated
/// demonstrations earlier in the output do not leak into the parse.
pub fn parse_answer<S: AsRef<str>>(raw: &str, format: &TaskFormat, triggers: &[S]) -> ParsedAnswer {
    let Some((trigger, tail)) = triggers.iter().find_map(|t| {
        let t = t.as_ref();
        if t.is_empty() {
            return None;
        }
        raw.rfind(t).map(|pos| (t, &raw[pos + t.len()..]))
    }) else {
        return ParsedAnswer::unparseable("");
    };

    let line = tail.split('\n').next().unwrap_or("");
    let value = match format.kind {
        FormatKind::MultiChoice => extract_choice(line, &format.label_set),
        FormatKind::Classification => extract_label(line, &format.label_set),
        FormatKind::Abstractive => extract_free_text(line),
    };
    match value {
        Some(v) => ParsedAnswer::parsed(v, trigger),
        None => ParsedAnswer::unparseable(trigger),
    }
}

const TOKEN_EDGES: &[char] = &[
    '(', ')', '[', ']', '{', '}', '.', ',', ':', ';', '!', '?', '"', '\'', '*',
];

// Parenthesized forms "(B)" / "B)" take priority over bare "B" / "B." so
// that an article such as "a" before the option is not mistaken for it.
fn extract_choice(text: &str, labels: &[String]) -> Option<String> {
    let lookup = |c: char| {
        let upper = c.to_ascii_uppercase();
        labels.iter().find(|l| l.len() == 1 && l.starts_with(upper)).cloned()
    };
    let single_letter = |s: &str| {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_alphabetic() => Some(c),
            _ => None,
        }
    };

    let tokens: Vec<&str> = text.split_whitespace().collect();
    for token in &tokens {
        let trimmed = token.trim_end_matches(['.', ',', ':', ';', '!', '?']);
        let Some(body) = trimmed.strip_suffix(')') else {
            continue;
        };
        let body = body.strip_prefix('(').unwrap_or(body);
        if let Some(label) = single_letter(body).and_then(lookup) {
            return Some(label);
        }
    }
    for token in &tokens {
        let body = token.trim_matches(TOKEN_EDGES);
        if let Some(label) = single_letter(body).and_then(lookup) {
            return Some(label);
        }
    }
    None
}

fn extract_label(text: &str, labels: &[String]) -> Option<String> {
    let haystack = text.to_ascii_lowercase();
    let bytes = haystack.as_bytes();
    let mut best: Option<(usize, usize, &String)> = None;
    for label in labels {
        let needle = label.to_ascii_lowercase();
        if needle.is_empty() {
            continue;
        }
        let mut from = 0;
        while let Some(offset) = haystack[from..].find(&needle) {
            let start = from + offset;
            let end = start + needle.len();
            let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
            let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
            if left_ok && right_ok {
                let better = match best {
                    None => true,
                    Some((s, len, _)) => start < s || (start == s && needle.len() > len),
                };
                if better {
                    best = Some((start, needle.len(), label));
                }
                break;
            }
            from = start + needle.chars().next().map_or(1, char::len_utf8);
        }
    }
    best.map(|(_, _, label)| label.clone())
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

fn extract_free_text(text: &str) -> Option<String> {
    // First sentence only; a period followed by whitespace ends it, which
    // leaves decimals such as "14.8" intact.
    let mut end = text.len();
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'.' && bytes.get(i + 1).is_some_and(|n| n.is_ascii_whitespace()) {
            end = i;
            break;
        }
    }
    let value = text[..end]
        .trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '.' | '`' | '\u{201c}' | '\u{201d}'))
        .trim();
    if normalize_text(value).is_empty() {
        None
    } else {
        Some(value.to_string())
    }
}

/// Lowercases, strips punctuation, drops the articles a/an/the and
/// collapses whitespace.
///
/// A hyphen survives only between two alphanumeric characters, so
/// "7-yard" stays one token.
pub fn normalize_text(s: &str) -> String {
    let lowered: Vec<char> = s.chars().flat_map(char::to_lowercase).collect();
    let mut cleaned = String::with_capacity(lowered.len());
    for (i, &c) in lowered.iter().enumerate() {
        if c.is_alphanumeric() || c.is_whitespace() {
            cleaned.push(c);
        } else if c == '-' {
            let left = i > 0 && lowered[i - 1].is_alphanumeric();
            let right = lowered.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if left && right {
                cleaned.push(c);
            }
        }
    }
    let mut out = String::with_capacity(cleaned.len());
    for token in cleaned.split_whitespace().filter(|t| !matches!(*t, "a" | "an" | "the")) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}
