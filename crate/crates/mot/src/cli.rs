//! The `mot` command line.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use mot_core::{BuildMeta, MemoryEntry, MemoryPool, ModeKind, Split, TaskFormat, TaskItem};

use crate::backend::{
    CachedModel, Embedder, HttpEmbedder, HttpModel, LanguageModel, RetryPolicy, ScriptFile, ScriptedEmbedder,
    ScriptedModel,
};
use crate::config::{BackendKind, FilterKind, RunConfig};
use crate::error::{Error, Result};
use crate::harness::{
    compare_modes, config_hash, embed_entries, evaluate, golds_from_items, load_golds, load_tasks, mode_label,
    sweep_memory_size, sweep_threshold, write_csv, SweepSetup, TaskSuite,
};
use crate::inference::{predict_batch, try_answer_one, AnswerContext, InferenceConfig};
use crate::persist::{load_pool, read_jsonl, save_pool, write_json, write_jsonl};
use crate::prethink::{entries_from_records, prethink_dataset, PrethinkConfig, SampleRecord};

#[derive(Debug, Parser)]
#[command(
    name = "mot",
    version,
    about = "Pre-think over unlabeled questions, then answer with recalled thoughts"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for path selection and clustering.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Record memory-selection transcripts.
    #[arg(long, global = true)]
    pub trace: bool,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Upper bound on concurrent requests.
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample reasoning paths for the unlabeled questions.
    Prethink {
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Filter, embed and cluster pre-thought entries into a pool file.
    BuildMemory {
        #[arg(long, value_enum)]
        filter: Option<FilterKind>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        golds: Option<PathBuf>,
    },
    /// Answer one question.
    Answer(AnswerArgs),
    /// Answer the test questions and write a report.
    Eval {
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated modes; writes a comparison table.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Threshold or memory-size sweeps.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    pub question: String,
    #[arg(long)]
    pub mode: Option<String>,
    /// Answer options, separated by `|`; makes the question multi-choice.
    #[arg(long)]
    pub choices: Option<String>,
    /// Comma-separated labels; makes the question a classification.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum SweepKind {
    /// Re-filter the pre-thought dump at each threshold.
    Threshold {
        /// Comma-separated thresholds; `inf` keeps everything.
        #[arg(long, value_delimiter = ',')]
        taus: Vec<f64>,
    },
    /// Answer with seeded fractions of the pool.
    MemorySize {
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
    },
}

fn parse_mode(name: &str) -> Result<ModeKind> {
    ModeKind::from_name(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown mode {name:?}; expected one of {}",
            ModeKind::ALL.map(ModeKind::name).join(", ")
        ))
    })
}

/// Loads the file named by `--config` and applies global flags on top.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.memory.seed = seed;
    }
    if let Some(kind) = cli.backend {
        config.backend.kind = kind;
    }
    if let Some(n) = cli.max_in_flight {
        config.backend.max_in_flight = n;
    }
    match &cli.command {
        Command::BuildMemory { filter, tau, golds } => {
            if let Some(f) = filter {
                config.prethink.filter = *f;
            }
            if let Some(t) = tau {
                config.prethink.tau = *t;
            }
            if golds.is_some() {
                config.paths.golds.clone_from(golds);
            }
        }
        Command::Prethink { tasks } | Command::Eval { tasks, .. } => {
            if let Some(t) = tasks {
                config.paths.tasks.clone_from(t);
            }
        }
        _ => {}
    }
    let mode = match &cli.command {
        Command::Answer(a) => a.mode.as_deref(),
        Command::Eval { mode, .. } => mode.as_deref(),
        _ => None,
    };
    if let Some(m) = mode {
        config.inference.mode = parse_mode(m)?;
    }
    config.validate()?;
    Ok(config)
}

pub struct Backends {
    pub model: Box<dyn LanguageModel>,
    pub embedder: Box<dyn Embedder>,
}

pub fn build_backends(config: &RunConfig) -> Result<Backends> {
    let b = &config.backend;
    let retry = RetryPolicy {
        attempts: b.retry_attempts,
        base_delay: Duration::from_millis(b.retry_base_delay_ms),
    };
    let (model, embedder, cache_dir): (Box<dyn LanguageModel>, Box<dyn Embedder>, Option<PathBuf>) = match b.kind {
        BackendKind::Scripted => {
            let script = match &b.script {
                Some(path) => ScriptFile::load(path)?,
                None => return Err(Error::Config("the scripted backend needs backend.script".into())),
            };
            (
                Box::new(ScriptedModel::from_script(b.model_id.clone(), script)),
                Box::new(ScriptedEmbedder::new(b.embed_dim)),
                b.cache_dir.clone(),
            )
        }
        BackendKind::Http => (
            Box::new(HttpModel::new(&b.base_url, b.model_id.clone(), retry)?),
            Box::new(HttpEmbedder::new(&b.base_url, b.embedder_id.clone(), retry)?),
            Some(b.cache_dir.clone().unwrap_or_else(|| ".mot-cache".into())),
        ),
    };
    let model: Box<dyn LanguageModel> = match cache_dir {
        Some(dir) => Box::new(CachedModel::new(model, &dir).map_err(|e| Error::io(dir, e))?),
        None => model,
    };
    Ok(Backends { model, embedder })
}

fn inference_config(config: &RunConfig, model_id: &str, trace: bool) -> InferenceConfig {
    let mut ic = InferenceConfig::new(config.inference.inference_mode(), model_id);
    ic.settings.max_tokens = config.inference.max_tokens;
    ic.k = config.memory.k;
    ic.recall = config.memory.recall;
    ic.demo_count = config.inference.demo_count;
    ic.seed = config.memory.seed;
    ic.max_in_flight = config.backend.max_in_flight;
    ic.trace = trace;
    ic
}

fn split_items(items: Vec<TaskItem>, split: Split) -> Vec<TaskItem> {
    items.into_iter().filter(|i| i.split == split).collect()
}

fn dataset_id(config: &RunConfig) -> String {
    config
        .paths
        .tasks
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn static_demos(config: &RunConfig, required: bool) -> Result<Vec<mot_core::Demonstration>> {
    match &config.inference.demos {
        Some(set) => crate::demos::resolve(set),
        None if required => Err(Error::Config("inference.demos is not set".into())),
        None => Ok(Vec::new()),
    }
}

fn load_pool_for(config: &RunConfig) -> Result<MemoryPool> {
    let path = &config.paths.pool;
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} needs a memory pool but {} does not exist",
            config.inference.mode.name(),
            path.display()
        )));
    }
    load_pool(path)
}

fn run_id(config: &RunConfig, label: &str) -> String {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%3f");
    format!("{stamp}-{label}-{}", &config_hash(config)[..8])
}

fn run_dir(config: &RunConfig, run_id: &str) -> Result<PathBuf> {
    let dir = config.paths.reports.join(run_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn cmd_prethink(config: &RunConfig, backends: &Backends) -> Result<()> {
    let items = split_items(load_tasks(&config.paths.tasks)?, Split::Unlabeled);
    if items.is_empty() {
        return Err(Error::Config(format!(
            "{} has no unlabeled questions",
            config.paths.tasks.display()
        )));
    }
    let demos = static_demos(config, true)?;
    let pc = PrethinkConfig {
        num_paths: config.prethink.n,
        temperature: config.prethink.temperature,
        max_tokens: config.prethink.max_tokens,
        seed: config.memory.seed,
        max_in_flight: config.backend.max_in_flight,
    };
    let out = prethink_dataset(&items, &demos, backends.model.as_ref(), &pc)?;
    write_jsonl(&config.paths.dump, &out.records)?;
    write_jsonl(&config.paths.entries, &out.entries)?;
    let stats = backends.model.stats();
    println!(
        "pre-thought {} questions: {} entries, {} skipped; {} samples decoded, {} from cache",
        items.len(),
        out.entries.len(),
        out.failures.len(),
        stats.decoded_samples,
        stats.cached_samples
    );
    Ok(())
}

fn formats_by_id(config: &RunConfig) -> Result<BTreeMap<String, TaskFormat>> {
    Ok(load_tasks(&config.paths.tasks)?
        .into_iter()
        .map(|i| (i.question_id, i.format))
        .collect())
}

fn cmd_build_memory(config: &RunConfig, backends: &Backends) -> Result<()> {
    let entries: Vec<MemoryEntry> = read_jsonl(&config.paths.entries)?;
    let p = &config.prethink;
    let (mut kept, tau) = match p.filter {
        FilterKind::Entropy => (
            mot_core::memory::filter_by_entropy(&entries, p.tau)?,
            p.tau.is_finite().then_some(p.tau),
        ),
        FilterKind::MaxP => (mot_core::memory::filter_by_max_p(&entries, p.rho)?, None),
        FilterKind::None => (entries.clone(), None),
        FilterKind::Gold => {
            let Some(path) = &config.paths.golds else {
                return Err(Error::Config("the gold filter needs paths.golds".into()));
            };
            let golds = load_golds(path)?;
            let formats = formats_by_id(config)?;
            let mut kept = Vec::new();
            for e in &entries {
                let format = formats
                    .get(&e.question_id)
                    .ok_or_else(|| Error::Config(format!("{} is not in the task file", e.question_id)))?;
                kept.extend(mot_core::memory::filter_by_gold(
                    std::slice::from_ref(e),
                    &golds,
                    format,
                )?);
            }
            (kept, None)
        }
    };
    embed_entries(&mut kept, backends.embedder.as_ref())?;
    let meta = BuildMeta {
        embedder_id: backends.embedder.embedder_id().to_string(),
        tau,
        filter: p.filter.name().to_string(),
        seed: config.memory.seed,
        created_at: chrono::Utc::now().to_rfc3339(),
        dataset_id: dataset_id(config),
    };
    let count = kept.len();
    let pool = MemoryPool::build(kept, config.memory.l, config.memory.seed, meta)?;
    save_pool(&pool, &config.paths.pool)?;
    println!(
        "kept {count} of {} entries in {} clusters: {}",
        entries.len(),
        pool.l,
        config.paths.pool.display()
    );
    Ok(())
}

fn answer_item(args: &AnswerArgs) -> Result<TaskItem> {
    let (format, choices) = match (&args.choices, args.labels.is_empty()) {
        (Some(_), false) => return Err(Error::Config("use either --choices or --labels".into())),
        (Some(text), true) => {
            let options: Vec<&str> = text.split('|').map(str::trim).collect();
            if options.len() > 26 {
                return Err(Error::Config("at most 26 choices".into()));
            }
            let format = TaskFormat::letters(options.len())?;
            let choices = format
                .label_set
                .iter()
                .cloned()
                .zip(options.iter().map(|o| o.to_string()))
                .collect();
            (format, choices)
        }
        (None, false) => (TaskFormat::classification(args.labels.clone())?, Vec::new()),
        (None, true) => (TaskFormat::abstractive(), Vec::new()),
    };
    let item = TaskItem {
        question_id: "cli".into(),
        question_text: args.question.clone(),
        choices,
        gold_answers: Vec::new(),
        format,
        split: Split::Unlabeled,
        triggers: Vec::new(),
    };
    item.validate()?;
    Ok(item)
}

fn cmd_answer(config: &RunConfig, backends: &Backends, args: &AnswerArgs, trace: bool) -> Result<()> {
    let item = answer_item(args)?;
    let kind = config.inference.mode;
    let pool = if kind.uses_memory() {
        Some(load_pool_for(config)?)
    } else {
        None
    };
    let demos = static_demos(config, kind.uses_static_demos())?;
    let ic = inference_config(config, backends.model.model_id(), trace);
    let ctx = AnswerContext {
        model: backends.model.as_ref(),
        embedder: Some(backends.embedder.as_ref()),
        pool: pool.as_ref(),
        demos: if kind.uses_static_demos() { &demos } else { &[] },
        config: &ic,
    };
    ctx.check()?;
    let prediction = try_answer_one(&item, &ctx)?;
    if trace && !prediction.trace.is_empty() {
        let path = config.paths.reports.join("answer-trace.jsonl");
        write_jsonl(&path, &prediction.trace)?;
        eprintln!("trace: {}", path.display());
    }
    match prediction.parsed.value() {
        Some(v) => println!("{}", item.format.display_answer(v)),
        None => println!("<unparseable>"),
    }
    Ok(())
}

fn cmd_eval(config: &RunConfig, backends: &Backends, modes: &[String], trace: bool) -> Result<()> {
    let items = split_items(load_tasks(&config.paths.tasks)?, Split::Test);
    if items.is_empty() {
        return Err(Error::Config(format!(
            "{} has no test questions",
            config.paths.tasks.display()
        )));
    }
    let kinds: Vec<ModeKind> = if modes.is_empty() {
        vec![config.inference.mode]
    } else {
        modes.iter().map(|m| parse_mode(m)).collect::<Result<_>>()?
    };
    let needs_pool = kinds.iter().any(|k| k.uses_memory());
    let pool = if needs_pool { Some(load_pool_for(config)?) } else { None };
    let demos = static_demos(config, kinds.iter().any(|k| k.uses_static_demos()))?;
    let ic = inference_config(config, backends.model.model_id(), trace);
    let model = backends.model.as_ref();
    let before = model.stats();

    if kinds.len() > 1 {
        let name = dataset_id(config);
        let suite = TaskSuite {
            name: &name,
            items: &items,
            pool: pool.as_ref(),
            demos: &demos,
        };
        let modes: Vec<_> = kinds
            .iter()
            .map(|&kind| mot_core::InferenceMode {
                kind,
                self_consistency: config.inference.self_consistency,
            })
            .collect();
        let table = compare_modes(&[suite], &modes, &ic, model, Some(backends.embedder.as_ref()))?;
        let id = run_id(config, "compare");
        let dir = run_dir(config, &id)?;
        write_json(&dir.join("comparison.json"), &table)?;
        crate::persist::write_atomic(&dir.join("comparison.csv"), &table.to_csv()?)?;
        for row in &table.rows {
            println!("{:<24} {:.4}", row.mode, row.cells[0].aggregate);
        }
        println!("run: {}", dir.display());
        return Ok(());
    }

    let ic = InferenceConfig {
        mode: mot_core::InferenceMode {
            kind: kinds[0],
            self_consistency: config.inference.self_consistency,
        },
        ..ic
    };
    let ctx = AnswerContext {
        model,
        embedder: Some(backends.embedder.as_ref()),
        pool: pool.as_ref(),
        demos: if kinds[0].uses_static_demos() { &demos } else { &[] },
        config: &ic,
    };
    let predictions = predict_batch(&items, &ctx)?;
    let mut report = evaluate(&predictions, &items)?;
    let id = run_id(config, &mode_label(&ic.mode));
    report.run_id.clone_from(&id);
    report.config_snapshot = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
    report.call_counts = model.stats().since(&before);
    let dir = run_dir(config, &id)?;
    write_json(&dir.join("report.json"), &report)?;
    write_jsonl(&dir.join("predictions.jsonl"), &predictions)?;
    if trace {
        let transcripts: Vec<_> = predictions
            .iter()
            .flat_map(|p| p.trace.iter().map(move |t| (p.question_id.as_str(), t)))
            .map(|(q, t)| serde_json::json!({"question_id": q, "transcript": t}))
            .collect();
        write_jsonl(&dir.join("retrieval_trace.jsonl"), &transcripts)?;
    }
    println!("{} {}: {:.4}", report.mode, report.metric_name, report.aggregate);
    println!("run: {}", dir.display());
    Ok(())
}

fn sweep_format(items: &[TaskItem]) -> Result<TaskFormat> {
    items
        .first()
        .map(|i| i.format.clone())
        .ok_or_else(|| Error::Config("task file is empty".into()))
}

fn cmd_sweep(config: &RunConfig, backends: &Backends, kind: &SweepKind, trace: bool) -> Result<()> {
    let all = load_tasks(&config.paths.tasks)?;
    let format = sweep_format(&all)?;
    let unlabeled_golds = golds_from_items(&split_items(all.clone(), Split::Unlabeled));
    let golds = match &config.paths.golds {
        Some(path) => Some(load_golds(path)?),
        None if !unlabeled_golds.is_empty() => Some(unlabeled_golds),
        None => None,
    };
    let test_items = split_items(all, Split::Test);
    if !test_items.is_empty() && !config.inference.mode.uses_memory() {
        return Err(Error::Config(
            "sweeps answer with a memory mode; set inference.mode".into(),
        ));
    }
    let ic = inference_config(config, backends.model.model_id(), trace);
    let id_name = dataset_id(config);
    let setup = SweepSetup {
        test_items: &test_items,
        model: backends.model.as_ref(),
        embedder: backends.embedder.as_ref(),
        config: &ic,
        l: config.memory.l,
        seed: config.memory.seed,
        golds: golds.as_ref(),
        format: &format,
        dataset_id: &id_name,
    };
    match kind {
        SweepKind::Threshold { taus } => {
            let thresholds = if taus.is_empty() {
                config.sweep.thresholds.clone()
            } else {
                taus.clone()
            };
            let records: Vec<SampleRecord> = read_jsonl(&config.paths.dump)?;
            let entries = entries_from_records(&records, config.memory.seed)?;
            let rows = sweep_threshold(&entries, config.sweep.filter, &thresholds, &setup)?;
            let dir = run_dir(config, &run_id(config, "threshold"))?;
            let path = dir.join("threshold_sweep.csv");
            write_csv(&path, &rows)?;
            println!("{}", path.display());
        }
        SweepKind::MemorySize { fractions } => {
            let fractions = if fractions.is_empty() {
                config.sweep.fractions.clone()
            } else {
                fractions.clone()
            };
            let pool = load_pool_for(config)?;
            let rows = sweep_memory_size(&pool, &fractions, &setup)?;
            let dir = run_dir(config, &run_id(config, "memory-size"))?;
            let path = dir.join("memory_size_sweep.csv");
            write_csv(&path, &rows)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = effective_config(cli)?;
    let backends = build_backends(&config)?;
    match &cli.command {
        Command::Prethink { .. } => cmd_prethink(&config, &backends),
        Command::BuildMemory { .. } => cmd_build_memory(&config, &backends),
        Command::Answer(args) => cmd_answer(&config, &backends, args, cli.trace),
        Command::Eval { modes, .. } => cmd_eval(&config, &backends, modes, cli.trace),
        Command::Sweep { kind } => cmd_sweep(&config, &backends, kind, cli.trace),
    }
}

/// Runs the command line and returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
