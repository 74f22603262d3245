//! Accuracy and token-level F1.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::format::{FormatKind, ParsedAnswer, TaskFormat};
use crate::parse::normalize_text;

/// Bag-of-tokens F1 over normalized text, maximized over the gold answers.
///
/// Both sides empty scores 1, exactly one side empty scores 0. An empty
/// gold list scores 0.
pub fn token_f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    let pred = normalize_text(prediction);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    golds
        .iter()
        .map(|gold| {
            let gold = normalize_text(gold.as_ref());
            let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
            pair_f1(&pred_tokens, &gold_tokens)
        })
        .fold(0.0, f64::max)
}

fn pair_f1(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut bag: BTreeMap<&str, usize> = BTreeMap::new();
    for t in gold {
        *bag.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(n) = bag.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// 1 when the parsed prediction equals the gold answer under the format's
/// canonicalization, 0 otherwise (including unparseable predictions).
pub fn exact_match(prediction: &ParsedAnswer, gold: &str, format: &TaskFormat) -> u8 {
    let Some(value) = prediction.value() else { return 0 };
    let equal = match format.kind {
        FormatKind::MultiChoice => value.eq_ignore_ascii_case(gold.trim()),
        FormatKind::Classification => value.trim().eq_ignore_ascii_case(gold.trim()),
        FormatKind::Abstractive => normalize_text(value) == normalize_text(gold),
    };
    u8::from(equal)
}

/// Whether a canonical answer counts as correct against any of the golds:
/// exact match for label formats, token F1 of exactly 1 for free text.
pub fn answer_matches_gold<S: AsRef<str>>(answer: &str, golds: &[S], format: &TaskFormat) -> bool {
    match format.kind {
        FormatKind::Abstractive => token_f1(answer, golds) == 1.0,
        _ => {
            let parsed = ParsedAnswer::parsed(answer, "");
            golds.iter().any(|g| exact_match(&parsed, g.as_ref(), format) == 1)
        }
    }
}

/// Per-item score under the format's metric: accuracy for label formats,
/// token F1 for abstractive ones.
pub fn score_prediction<S: AsRef<str>>(prediction: &ParsedAnswer, golds: &[S], format: &TaskFormat) -> f64 {
    match format.kind {
        FormatKind::Abstractive => match prediction.value() {
            Some(v) => token_f1(v, golds),
            None => 0.0,
        },
        _ => {
            let hit = golds.iter().any(|g| exact_match(prediction, g.as_ref(), format) == 1);
            if hit {
                1.0
            } else {
                0.0
            }
        }
    }
}
