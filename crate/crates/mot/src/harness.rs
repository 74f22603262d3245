//! Task files, evaluation reports, sweeps and mode comparison.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use mot_core::memory::{filter_by_entropy, filter_by_max_p};
use mot_core::metrics::{answer_matches_gold, score_prediction};
use mot_core::{
    BuildMeta, Demonstration, FormatKind, InferenceMode, MemoryEntry, MemoryPool, ModeKind, ParsedAnswer, Split,
    TaskFormat, TaskItem,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{CallStats, Embedder, LanguageModel};
use crate::error::{Error, Result};
use crate::inference::{predict_batch, AnswerContext, InferenceConfig, Prediction};

/// One line of a task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub question_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golds: Option<Vec<String>>,
    pub format: FormatKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triggers: Option<Vec<String>>,
}

impl TaskRecord {
    pub fn into_item(self) -> std::result::Result<TaskItem, String> {
        let choices = self.choices.unwrap_or_default();
        let labels = self.labels.unwrap_or_default();
        let format = match self.format {
            FormatKind::MultiChoice => {
                if choices.is_empty() {
                    return Err("multi_choice item has no choices".into());
                }
                if labels.is_empty() {
                    TaskFormat::multi_choice(choices.iter().map(|(l, _)| l.clone()))
                } else {
                    TaskFormat::multi_choice(labels)
                }
            }
            FormatKind::Classification => {
                if labels.is_empty() {
                    return Err("classification item has no labels".into());
                }
                TaskFormat::classification(labels)
            }
            FormatKind::Abstractive => {
                if !labels.is_empty() {
                    return Err("abstractive item must not carry labels".into());
                }
                Ok(TaskFormat::abstractive())
            }
        }
        .map_err(|e| e.to_string())?;
        let gold_answers = self
            .golds
            .unwrap_or_default()
            .iter()
            .map(|g| {
                format
                    .canonicalize(g)
                    .ok_or_else(|| format!("gold answer {g:?} does not fit the format"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let item = TaskItem {
            question_id: self.question_id,
            question_text: self.question,
            choices,
            gold_answers,
            format,
            split: self.split,
            triggers: self.triggers.unwrap_or_default(),
        };
        item.validate().map_err(|e| e.to_string())?;
        Ok(item)
    }

    pub fn from_item(item: &TaskItem) -> Self {
        let labels = match item.format.kind {
            FormatKind::Classification => Some(item.format.label_set.clone()),
            _ => None,
        };
        Self {
            question_id: item.question_id.clone(),
            question: item.question_text.clone(),
            choices: (!item.choices.is_empty()).then(|| item.choices.clone()),
            golds: (!item.gold_answers.is_empty()).then(|| item.gold_answers.clone()),
            format: item.format.kind,
            labels,
            split: item.split,
            triggers: (!item.triggers.is_empty()).then(|| item.triggers.clone()),
        }
    }
}

pub fn load_tasks(path: &Path) -> Result<Vec<TaskItem>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Load {
            path: path.into(),
            line: i + 1,
            message,
        };
        let record: TaskRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        let item = record.into_item().map_err(fail)?;
        if !seen.insert(item.question_id.clone()) {
            return Err(fail(format!("duplicate question_id {:?}", item.question_id)));
        }
        items.push(item);
    }
    Ok(items)
}

pub fn write_tasks(path: &Path, items: &[TaskItem]) -> Result<()> {
    let records: Vec<TaskRecord> = items.iter().map(TaskRecord::from_item).collect();
    crate::persist::write_jsonl(path, &records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub question_id: String,
    pub golds: Vec<String>,
}

/// Gold answers from a JSONL file of `{"question_id", "golds"}` lines.
pub fn load_golds(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let records: Vec<GoldRecord> = crate::persist::read_jsonl(path)?;
    Ok(records.into_iter().map(|r| (r.question_id, r.golds)).collect())
}

/// Gold answers carried by the items themselves.
pub fn golds_from_items(items: &[TaskItem]) -> BTreeMap<String, Vec<String>> {
    items
        .iter()
        .filter(|i| !i.gold_answers.is_empty())
        .map(|i| (i.question_id.clone(), i.gold_answers.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub question_id: String,
    pub score: f64,
    pub parsed: ParsedAnswer,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub mode: String,
    pub metric_name: String,
    pub aggregate: f64,
    pub per_item: Vec<ItemScore>,
    pub config_snapshot: serde_json::Value,
    pub call_counts: CallStats,
}

pub fn metric_name(items: &[TaskItem]) -> &'static str {
    if items.iter().any(|i| i.format.kind == FormatKind::Abstractive) {
        "f1"
    } else {
        "accuracy"
    }
}

pub fn mode_label(mode: &InferenceMode) -> String {
    match mode.self_consistency {
        Some(sc) => format!("{}+sc{}", mode.kind.name(), sc.num_paths),
        None => mode.kind.name().to_string(),
    }
}

/// Scores id-aligned predictions: exact match for label formats, best
/// token F1 over the golds for free text, zero for failed items. Run id,
/// config snapshot and call counts are left for the caller.
pub fn evaluate(predictions: &[Prediction], items: &[TaskItem]) -> Result<EvalReport> {
    if predictions.len() != items.len() {
        return Err(Error::Mismatch(format!(
            "{} predictions for {} items",
            predictions.len(),
            items.len()
        )));
    }
    if items.is_empty() {
        return Err(Error::Mismatch("nothing to evaluate".into()));
    }
    let mut per_item = Vec::with_capacity(items.len());
    for (p, item) in predictions.iter().zip(items) {
        if p.question_id != item.question_id {
            return Err(Error::Mismatch(format!(
                "prediction {} is aligned with item {}",
                p.question_id, item.question_id
            )));
        }
        if item.gold_answers.is_empty() {
            return Err(Error::Mismatch(format!("item {} has no gold answer", item.question_id)));
        }
        let score = if p.failed() {
            0.0
        } else {
            score_prediction(&p.parsed, &item.gold_answers, &item.format)
        };
        per_item.push(ItemScore {
            question_id: p.question_id.clone(),
            score,
            parsed: p.parsed.clone(),
            failed: p.failed(),
        });
    }
    let aggregate = per_item.iter().map(|s| s.score).sum::<f64>() / per_item.len() as f64;
    let mode = predictions
        .first()
        .map(|p| p.mode.name().to_string())
        .unwrap_or_default();
    Ok(EvalReport {
        run_id: String::new(),
        mode,
        metric_name: metric_name(items).to_string(),
        aggregate,
        per_item,
        config_snapshot: serde_json::Value::Null,
        call_counts: CallStats::default(),
    })
}

/// Hex sha256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).unwrap_or_default()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceFilter {
    Entropy,
    MaxP,
}

impl ConfidenceFilter {
    pub fn name(self) -> &'static str {
        match self {
            ConfidenceFilter::Entropy => "entropy",
            ConfidenceFilter::MaxP => "max_p",
        }
    }

    pub fn apply(self, entries: &[MemoryEntry], threshold: f64) -> Result<Vec<MemoryEntry>> {
        Ok(match self {
            ConfidenceFilter::Entropy => filter_by_entropy(entries, threshold)?,
            ConfidenceFilter::MaxP => filter_by_max_p(entries, threshold)?,
        })
    }
}

/// Shared inputs of the sweeps.
#[derive(Clone, Copy)]
pub struct SweepSetup<'a> {
    /// Test questions answered for the downstream metric; may be empty.
    pub test_items: &'a [TaskItem],
    pub model: &'a dyn LanguageModel,
    pub embedder: &'a dyn Embedder,
    /// Must use a memory mode when test items are given.
    pub config: &'a InferenceConfig,
    pub l: usize,
    pub seed: u64,
    /// Gold answers of the pre-thought questions, for retained accuracy.
    pub golds: Option<&'a BTreeMap<String, Vec<String>>>,
    pub format: &'a TaskFormat,
    pub dataset_id: &'a str,
}

impl SweepSetup<'_> {
    fn downstream(&self, pool: &MemoryPool) -> Result<Option<f64>> {
        if self.test_items.is_empty() {
            return Ok(None);
        }
        let ctx = AnswerContext {
            model: self.model,
            embedder: Some(self.embedder),
            pool: Some(pool),
            demos: &[],
            config: self.config,
        };
        let predictions = predict_batch(self.test_items, &ctx)?;
        Ok(Some(evaluate(&predictions, self.test_items)?.aggregate))
    }

    fn meta(&self, filter: &str, tau: Option<f64>) -> BuildMeta {
        BuildMeta {
            embedder_id: self.embedder.embedder_id().to_string(),
            tau,
            filter: filter.to_string(),
            seed: self.seed,
            created_at: String::new(),
            dataset_id: self.dataset_id.to_string(),
        }
    }
}

/// Fills in missing question embeddings, batching calls.
pub fn embed_entries(entries: &mut [MemoryEntry], embedder: &dyn Embedder) -> Result<()> {
    let missing: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].embedding.is_none()).collect();
    for chunk in missing.chunks(64) {
        let texts: Vec<&str> = chunk.iter().map(|&i| entries[i].question_text.as_str()).collect();
        let vectors = embedder.embed(&texts)?;
        for (&i, v) in chunk.iter().zip(vectors) {
            entries[i].embedding = Some(v);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub filter: String,
    pub threshold: f64,
    pub retained_count: usize,
    pub filtered_out_ratio: f64,
    pub retained_accuracy: Option<f64>,
    pub metric: Option<f64>,
}

/// Re-filters pre-thought entries at each threshold, rebuilds the pool and
/// answers the test items with it. No new pre-thinking samples are drawn.
pub fn sweep_threshold(
    entries: &[MemoryEntry],
    filter: ConfidenceFilter,
    thresholds: &[f64],
    setup: &SweepSetup<'_>,
) -> Result<Vec<ThresholdRow>> {
    if thresholds.is_empty() {
        return Err(Error::Config("threshold list is empty".into()));
    }
    if entries.is_empty() {
        return Err(Error::Config("no pre-thought entries to sweep".into()));
    }
    let mut embedded = entries.to_vec();
    if !setup.test_items.is_empty() {
        embed_entries(&mut embedded, setup.embedder)?;
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let kept = filter.apply(&embedded, t)?;
        let retained_accuracy = match setup.golds {
            Some(golds) if !kept.is_empty() => {
                let mut correct = 0usize;
                for e in &kept {
                    let gold = golds
                        .get(&e.question_id)
                        .ok_or_else(|| Error::Config(format!("no gold answer for {}", e.question_id)))?;
                    correct += usize::from(answer_matches_gold(&e.answer, gold, setup.format));
                }
                Some(correct as f64 / kept.len() as f64)
            }
            _ => None,
        };
        let metric = if setup.test_items.is_empty() {
            None
        } else if kept.len() < setup.l {
            log::warn!(
                "{} entries at threshold {t} cannot fill {} clusters",
                kept.len(),
                setup.l
            );
            None
        } else {
            let tau = (filter == ConfidenceFilter::Entropy && t.is_finite()).then_some(t);
            let pool = MemoryPool::build(kept.clone(), setup.l, setup.seed, setup.meta(filter.name(), tau))?;
            setup.downstream(&pool)?
        };
        rows.push(ThresholdRow {
            filter: filter.name().to_string(),
            threshold: t,
            retained_count: kept.len(),
            filtered_out_ratio: 1.0 - kept.len() as f64 / entries.len() as f64,
            retained_accuracy,
            metric,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySizeRow {
    pub fraction: f64,
    pub pool_size: usize,
    pub metric: Option<f64>,
}

/// Answers the test items with seeded subsamples of `pool`.
pub fn sweep_memory_size(pool: &MemoryPool, fractions: &[f64], setup: &SweepSetup<'_>) -> Result<Vec<MemorySizeRow>> {
    if fractions.is_empty() {
        return Err(Error::Config("fraction list is empty".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!("fraction {f} is outside (0, 1]")));
    }
    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let sub = pool.subsample(fraction, setup.seed)?;
        rows.push(MemorySizeRow {
            fraction,
            pool_size: sub.len(),
            metric: setup.downstream(&sub)?,
        });
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    crate::persist::write_atomic(path, &csv_bytes(rows)?)
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Inputs for one task column of a comparison.
#[derive(Clone, Copy)]
pub struct TaskSuite<'a> {
    pub name: &'a str,
    pub items: &'a [TaskItem],
    pub pool: Option<&'a MemoryPool>,
    pub demos: &'a [Demonstration],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub task: String,
    pub metric_name: String,
    pub aggregate: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: String,
    pub cells: Vec<ComparisonCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub tasks: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn cell(&self, mode: &str, task: &str) -> Option<&ComparisonCell> {
        self.rows
            .iter()
            .find(|r| r.mode == mode)?
            .cells
            .iter()
            .find(|c| c.task == task)
    }

    /// Rows are modes, columns are tasks, values are aggregates.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["mode".to_string()];
        header.extend(self.tasks.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
        for row in &self.rows {
            let mut record = vec![row.mode.clone()];
            record.extend(row.cells.iter().map(|c| c.aggregate.to_string()));
            w.write_record(&record).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Runs every mode on every task suite. Rows follow `modes`, columns
/// follow `suites`.
pub fn compare_modes(
    suites: &[TaskSuite<'_>],
    modes: &[InferenceMode],
    base: &InferenceConfig,
    model: &dyn LanguageModel,
    embedder: Option<&dyn Embedder>,
) -> Result<ComparisonTable> {
    let mut rows = Vec::with_capacity(modes.len());
    for mode in modes {
        let config = InferenceConfig {
            mode: *mode,
            ..base.clone()
        };
        let mut cells = Vec::with_capacity(suites.len());
        for suite in suites {
            let ctx = AnswerContext {
                model,
                embedder,
                pool: suite.pool,
                demos: suite.demos,
                config: &config,
            };
            let predictions = predict_batch(suite.items, &ctx)?;
            let report = evaluate(&predictions, suite.items)?;
            cells.push(ComparisonCell {
                task: suite.name.to_string(),
                metric_name: report.metric_name,
                aggregate: report.aggregate,
                config_hash: config_hash(&(suite.name, &config)),
            });
        }
        rows.push(ComparisonRow {
            mode: mode_label(mode),
            cells,
        });
    }
    Ok(ComparisonTable {
        tasks: suites.iter().map(|s| s.name.to_string()).collect(),
        rows,
    })
}

/// Convenience for the mode list of a full comparison.
pub fn greedy_modes(kinds: &[ModeKind]) -> Vec<InferenceMode> {
    kinds.iter().map(|&k| InferenceMode::greedy(k)).collect()
}
