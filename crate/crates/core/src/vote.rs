//! Majority voting over sampled reasoning paths and the confidence measures
//! derived from the vote: answer entropy and winner share (max-p).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::format::ParsedAnswer;
use crate::seed::rng_from_seed;

/// One decoded reasoning path and the answer parsed from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtSample {
    pub path_index: usize,
    pub rationale_text: String,
    pub answer: ParsedAnswer,
}

/// Outcome of majority voting over one question's samples.
///
/// `total_parsed == 0` marks a question where nothing parsed; callers drop it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteSummary {
    pub counts: BTreeMap<String, usize>,
    pub total_parsed: usize,
    pub winner: String,
    pub winner_count: usize,
    pub entropy: f64,
    pub max_p: f64,
}

impl VoteSummary {
    pub fn is_empty(&self) -> bool {
        self.total_parsed == 0
    }

    fn empty() -> Self {
        Self {
            counts: BTreeMap::new(),
            total_parsed: 0,
            winner: String::new(),
            winner_count: 0,
            entropy: 0.0,
            max_p: 0.0,
        }
    }
}

/// Majority vote over parsed answers.
///
/// Unparseable samples are left out of both the counts and the denominator.
/// Ties go to the answer whose first occurrence comes earliest in decode
/// order (by `path_index`).
pub fn majority_vote(samples: &[ThoughtSample]) -> Result<VoteSummary> {
    if samples.is_empty() {
        return Err(CoreError::Precondition("majority vote over zero samples".into()));
    }
    let mut ordered: Vec<&ThoughtSample> = samples.iter().collect();
    ordered.sort_by_key(|s| s.path_index);

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut first_seen: Vec<&str> = Vec::new();
    for sample in &ordered {
        let Some(value) = sample.answer.value() else { continue };
        let count = counts.entry(value.into()).or_default();
        if *count == 0 {
            first_seen.push(value);
        }
        *count += 1;
    }
    let total_parsed: usize = counts.values().sum();
    if total_parsed == 0 {
        return Ok(VoteSummary::empty());
    }

    let mut winner = first_seen[0];
    let mut winner_count = counts[winner];
    for &candidate in &first_seen[1..] {
        let c = counts[candidate];
        if c > winner_count {
            winner = candidate;
            winner_count = c;
        }
    }
    let winner = String::from(winner);
    let entropy = answer_entropy(&counts, total_parsed)?;
    Ok(VoteSummary {
        max_p: winner_count as f64 / total_parsed as f64,
        counts,
        total_parsed,
        winner,
        winner_count,
        entropy,
    })
}

/// Natural-log Shannon entropy of the empirical answer distribution,
/// `-sum(p * ln p)` with `p = count / total`.
///
/// Zero exactly when a single answer has all the votes.
pub fn answer_entropy(counts: &BTreeMap<String, usize>, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(CoreError::Domain("answer entropy of an empty distribution".into()));
    }
    let sum: usize = counts.values().sum();
    if sum != total {
        return Err(CoreError::Domain(format!("counts sum to {sum} but total is {total}")));
    }
    let support = counts.values().filter(|&&c| c > 0).count();
    if support <= 1 {
        return Ok(0.0);
    }
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts.values().filter(|&&c| c > 0) {
        let p = c as f64 / total;
        h -= p * libm::log(p);
    }
    Ok(h)
}

/// Picks one path supporting the winning answer, uniformly under `seed`.
pub fn select_retained_path<'a>(
    samples: &'a [ThoughtSample],
    summary: &VoteSummary,
    seed: u64,
) -> Result<&'a ThoughtSample> {
    if summary.is_empty() {
        return Err(CoreError::Precondition(
            "cannot retain a path for a question with no parsed answers".into(),
        ));
    }
    let mut winning: Vec<&ThoughtSample> = samples
        .iter()
        .filter(|s| s.answer.value() == Some(summary.winner.as_str()))
        .collect();
    if winning.is_empty() {
        return Err(CoreError::Precondition(
            "vote summary winner does not occur among the samples".into(),
        ));
    }
    winning.sort_by_key(|s| s.path_index);
    let mut rng = rng_from_seed(seed);
    let pick = rng.random_range(0..winning.len());
    Ok(winning[pick])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn samples(answers: &[&str]) -> Vec<ThoughtSample> {
        answers
            .iter()
            .enumerate()
            .map(|(i, a)| ThoughtSample {
                path_index: i,
                rationale_text: alloc::format!("path {i}. The answer is ({a})."),
                answer: if a.is_empty() {
                    ParsedAnswer::unparseable("")
                } else {
                    ParsedAnswer::parsed(*a, "The answer is")
                },
            })
            .collect()
    }

    fn counts(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn strict_majority() {
        let v = majority_vote(&samples(&["A", "B", "A", "C"])).unwrap();
        assert_eq!(v.winner, "A");
        assert_eq!(v.counts, counts(&[("A", 2), ("B", 1), ("C", 1)]));
        assert_eq!(v.max_p, 0.5);
    }

    #[test]
    fn tie_goes_to_first_decoded() {
        let v = majority_vote(&samples(&["A", "A", "B", "B"])).unwrap();
        assert_eq!(v.winner, "A");
        assert_eq!(v.max_p, 0.5);
        let v = majority_vote(&samples(&["B", "A", "A", "B"])).unwrap();
        assert_eq!(v.winner, "B");
    }

    #[test]
    fn unanimous() {
        let v = majority_vote(&samples(&["A"; 16])).unwrap();
        assert_eq!((v.winner.as_str(), v.entropy, v.max_p), ("A", 0.0, 1.0));
    }

    #[test]
    fn unparseable_samples_are_excluded() {
        let v = majority_vote(&samples(&["", "B", "", "B", "C"])).unwrap();
        assert_eq!(v.total_parsed, 3);
        assert_eq!(v.winner, "B");
        let v = majority_vote(&samples(&["", ""])).unwrap();
        assert!(v.is_empty());
        assert!(majority_vote(&[]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(answer_entropy(&counts(&[("A", 16)]), 16).unwrap(), 0.0);
        let h = answer_entropy(&counts(&[("A", 8), ("B", 8)]), 16).unwrap();
        assert!((h - core::f64::consts::LN_2).abs() < 1e-12);
        let h = answer_entropy(&counts(&[("A", 8), ("B", 4), ("C", 4)]), 16).unwrap();
        assert!((h - 1.0397).abs() < 1e-4);
        assert!(matches!(answer_entropy(&counts(&[]), 0), Err(CoreError::Domain(_))));
        assert!(matches!(
            answer_entropy(&counts(&[("A", 2)]), 3),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn retained_path_supports_winner() {
        let s = samples(&["A", "B", "A", "A"]);
        let v = majority_vote(&s).unwrap();
        for seed in 0..32 {
            let p = select_retained_path(&s, &v, seed).unwrap();
            assert_eq!(p.answer.value(), Some("A"));
            assert_eq!(p, select_retained_path(&s, &v, seed).unwrap());
        }
        let single = samples(&["B", "A", "A"]);
        let mut v = majority_vote(&single).unwrap();
        v.winner = "B".into();
        assert_eq!(select_retained_path(&single, &v, 3).unwrap().path_index, 0);
        assert!(select_retained_path(&single, &VoteSummary::empty(), 0).is_err());
    }
}
