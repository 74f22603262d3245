//! A scripted world of archive topics. Each topic has one hidden tag; the
//! model recovers it reliably only from a same-topic demonstration.

use std::collections::BTreeMap;

use mot::backend::{ScriptCall, ScriptedModel};
use mot_core::{Demonstration, Split, TaskFormat, TaskItem};

pub const TOPICS: [(&str, &str); 8] = [
    ("glacier moss", "amber"),
    ("copper lantern", "birch"),
    ("velvet orchard", "cobalt"),
    ("granite harbor", "dune"),
    ("silent meadow", "ember"),
    ("crimson falcon", "fjord"),
    ("hollow reef", "garnet"),
    ("ivory canyon", "harbor"),
];

/// Vote agreement out of 16 for the pre-thought questions, cycled.
pub const AGREEMENT: [usize; 5] = [16, 15, 16, 14, 12];

pub fn codes() -> Vec<&'static str> {
    TOPICS.iter().map(|(_, c)| *c).collect()
}

pub fn format() -> TaskFormat {
    TaskFormat::classification(codes()).unwrap()
}

pub fn question_text(topic: &str, record: usize) -> String {
    format!("Record {record} of the {topic} archive: which tag does this record carry?")
}

pub fn topic_of(text: &str) -> Option<usize> {
    TOPICS.iter().position(|(t, _)| text.contains(&format!(" {t} archive")))
}

fn record_of(text: &str) -> usize {
    text.strip_prefix("Record ")
        .and_then(|r| r.split_whitespace().next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(1)
}

pub struct World {
    pub unlabeled: Vec<TaskItem>,
    pub test: Vec<TaskItem>,
    /// Correct votes out of 16 by shown question text.
    pub agreement: BTreeMap<String, usize>,
}

fn item(id: String, topic: usize, record: usize, split: Split) -> TaskItem {
    TaskItem {
        question_id: id,
        question_text: question_text(TOPICS[topic].0, record),
        choices: Vec::new(),
        gold_answers: vec![TOPICS[topic].1.to_string()],
        format: format(),
        split,
        triggers: Vec::new(),
    }
}

impl World {
    pub fn new(unlabeled: usize, test: usize) -> Self {
        let mut world = World {
            unlabeled: Vec::new(),
            test: Vec::new(),
            agreement: BTreeMap::new(),
        };
        for i in 0..unlabeled {
            let it = item(format!("u{i:03}"), i % TOPICS.len(), 100 + i, Split::Unlabeled);
            world
                .agreement
                .insert(it.prompt_text(), AGREEMENT[(i / TOPICS.len()) % AGREEMENT.len()]);
            world.unlabeled.push(it);
        }
        for i in 0..test {
            world
                .test
                .push(item(format!("t{i:03}"), i % TOPICS.len(), 2000 + i, Split::Test));
        }
        world
    }

    pub fn model(&self) -> ScriptedModel {
        let agreement = self.agreement.clone();
        ScriptedModel::new("world").rule(move |call, _req, index| Some(reply(call, &agreement, index)))
    }
}

fn wrong(code: usize) -> &'static str {
    TOPICS[(code + 1) % TOPICS.len()].1
}

fn reply(call: &ScriptCall, agreement: &BTreeMap<String, usize>, index: usize) -> String {
    match call {
        ScriptCall::Retrieval { target, candidates } => {
            let pick = topic_of(target)
                .and_then(|t| candidates.iter().position(|c| topic_of(c) == Some(t)))
                .unwrap_or(0);
            format!(
                "Both concern the same archive. The most helpful question is question {}.",
                pick + 1
            )
        }
        ScriptCall::Extraction { .. } => " unknown.".into(),
        ScriptCall::Answer {
            question,
            demos,
            prefix,
            step_by_step,
        } => {
            let Some(topic) = topic_of(question) else {
                return "The answer is unknown.".into();
            };
            let (name, code) = TOPICS[topic];
            if let Some(&agree) = agreement.get(question) {
                let tag = if index < agree { code } else { wrong(topic) };
                return format!("Records of the {name} archive are filed under one tag. The answer is {tag}.");
            }
            let recalled = demos
                .iter()
                .find(|d| topic_of(&d.question) == Some(topic))
                .and_then(|d| {
                    d.completion
                        .rsplit_once("The answer is ")
                        .map(|(_, a)| a.trim_end_matches('.').to_string())
                });
            let reasons = *step_by_step || demos.iter().any(|d| !d.completion.starts_with("The answer is"));
            let answer = match recalled {
                Some(tag) => format!("A record from the {name} archive carries {tag}. The answer is {tag}."),
                None if reasons && record_of(question).is_multiple_of(2) => {
                    format!("Even records of the {name} archive carry {code}. The answer is {code}.")
                }
                None => "No record of this archive is known. The answer is unknown.".into(),
            };
            match prefix {
                Some(_) => format!(
                    " {}",
                    answer
                        .rsplit_once("The answer is ")
                        .map(|(_, a)| a)
                        .unwrap_or("unknown.")
                ),
                None => answer,
            }
        }
        ScriptCall::Other { .. } => "unknown".into(),
    }
}

/// Static demonstrations unrelated to the archive topics.
pub fn irrelevant_demos() -> Vec<Demonstration> {
    [
        ("What is 3 plus 4?", "3 plus 4 equals 7.", "7"),
        ("What is 6 times 2?", "6 times 2 equals 12.", "12"),
        ("What is 9 minus 5?", "9 minus 5 equals 4.", "4"),
        ("What is 8 divided by 2?", "8 divided by 2 equals 4.", "4"),
    ]
    .into_iter()
    .map(|(q, r, a)| Demonstration::new(q, r, a))
    .collect()
}

pub struct PipelineRun {
    pub entries: Vec<mot_core::MemoryEntry>,
    pub pool: mot_core::MemoryPool,
    pub predictions: Vec<mot::inference::Prediction>,
    pub prethink_calls: u64,
    pub answer_calls: u64,
}

/// Prethink at n=16, entropy filter at `tau`, pool of `l` clusters, then
/// greedy MoT answering with LLM recall over `k` candidates per cluster.
pub fn run_pipeline(world: &World, tau: f64, l: usize, k: usize, seed: u64) -> PipelineRun {
    use mot::backend::{Embedder, LanguageModel, ScriptedEmbedder};
    use mot::harness::embed_entries;
    use mot::inference::{predict_batch, AnswerContext, InferenceConfig};
    use mot::prethink::{prethink_dataset, PrethinkConfig};
    use mot_core::memory::filter_by_entropy;
    use mot_core::{BuildMeta, InferenceMode, MemoryPool, ModeKind};

    let model = world.model();
    let embedder = ScriptedEmbedder::default();
    let cfg = PrethinkConfig {
        seed,
        ..PrethinkConfig::default()
    };
    let out = prethink_dataset(&world.unlabeled, &irrelevant_demos(), &model, &cfg).unwrap();
    let prethink_calls = model.stats().decoded_samples;
    let mut kept = filter_by_entropy(&out.entries, tau).unwrap();
    embed_entries(&mut kept, &embedder).unwrap();
    let meta = BuildMeta {
        embedder_id: embedder.embedder_id().into(),
        tau: Some(tau),
        filter: "entropy".into(),
        seed,
        created_at: "fixed".into(),
        dataset_id: "world".into(),
    };
    let pool = MemoryPool::build(kept, l, seed, meta).unwrap();
    let mut config = InferenceConfig::new(InferenceMode::greedy(ModeKind::Mot), "world");
    config.k = k;
    config.seed = seed;
    let ctx = AnswerContext {
        model: &model,
        embedder: Some(&embedder),
        pool: Some(&pool),
        demos: &[],
        config: &config,
    };
    let predictions = predict_batch(&world.test, &ctx).unwrap();
    let answer_calls = model.stats().decoded_samples - prethink_calls;
    PipelineRun {
        entries: out.entries,
        pool,
        predictions,
        prethink_calls,
        answer_calls,
    }
}
