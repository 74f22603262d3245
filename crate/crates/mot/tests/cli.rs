mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use common::world::{World, TOPICS};
use mot::backend::ScriptFile;
use mot::harness::write_tasks;
use mot_core::TaskItem;

fn mot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mot"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes tasks, a reply script and a config into `dir`.
fn setup(dir: &Path) -> World {
    let world = World::new(40, 8);
    let items: Vec<TaskItem> = world.unlabeled.iter().chain(&world.test).cloned().collect();
    write_tasks(&dir.join("tasks.jsonl"), &items).unwrap();
    let mut answers = BTreeMap::new();
    for item in &world.unlabeled {
        let code = &item.gold_answers[0];
        let codes = common::world::codes();
        let wrong = codes[(codes.iter().position(|c| c == code).unwrap() + 1) % codes.len()];
        let agree = world.agreement[&item.prompt_text()];
        let samples = (0..16)
            .map(|i| if i < agree { code.as_str() } else { wrong })
            .map(|c| format!("Filed under one tag. The answer is {c}."))
            .collect();
        answers.insert(item.prompt_text(), samples);
    }
    for item in &world.test {
        answers.insert(
            item.prompt_text(),
            vec![format!("Recalled it. The answer is {}.", item.gold_answers[0])],
        );
    }
    let script = ScriptFile {
        answers,
        extractions: BTreeMap::new(),
        retrieval: Some("The most helpful question is question 1.".into()),
        fallback: None,
    };
    std::fs::write(dir.join("script.json"), serde_json::to_string_pretty(&script).unwrap()).unwrap();
    std::fs::write(
        dir.join("mot.toml"),
        r#"
[backend]
script = "script.json"

[prethink]
tau = 0.3

[memory]
l = 4
k = 10
seed = 3

[inference]
demos = "boolq"
"#,
    )
    .unwrap();
    world
}

#[test]
fn full_run_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let world = setup(dir);

    let out = mot(dir, &["--config", "mot.toml", "prethink"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("pre-thought 40 questions: 40 entries"),
        "{}",
        stdout(&out)
    );
    assert_eq!(
        std::fs::read_to_string(dir.join("out/dump.jsonl"))
            .unwrap()
            .lines()
            .count(),
        40
    );

    let out = mot(dir, &["--config", "mot.toml", "build-memory"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("kept 24 of 40 entries in 4 clusters"),
        "{}",
        stdout(&out)
    );
    let pool = mot::persist::load_pool(&dir.join("out/pool.jsonl")).unwrap();
    assert_eq!(pool.build_meta.tau, Some(0.3));
    assert_eq!(pool.build_meta.dataset_id, "tasks");

    let out = mot(dir, &["--config", "mot.toml", "eval"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("mot accuracy: 1.0000"), "{}", stdout(&out));
    let runs: Vec<_> = std::fs::read_dir(dir.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 1);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(runs[0].join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metric_name"], "accuracy");
    assert_eq!(report["call_counts"]["decoded_samples"], 8 * 5);
    assert_eq!(report["config_snapshot"]["memory"]["l"], 4);
    assert_eq!(report["per_item"].as_array().unwrap().len(), 8);

    let out = mot(dir, &["--config", "mot.toml", "eval", "--modes", "mot,few_shot_cot"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = stdout(&out)
        .lines()
        .last()
        .unwrap()
        .strip_prefix("run: ")
        .unwrap()
        .to_string();
    let table = std::fs::read_to_string(dir.join(&run).join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
    assert!(dir.join(&run).join("comparison.json").exists());

    let out = mot(
        dir,
        &["--config", "mot.toml", "sweep", "threshold", "--taus", "inf,0.3,0"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv_path = stdout(&out).trim().to_string();
    let csv = std::fs::read_to_string(dir.join(csv_path)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "filter,threshold,retained_count,filtered_out_ratio,retained_accuracy,metric"
    );
    assert!(lines[1].starts_with("entropy,inf,40,0.0,"), "{csv}");
    assert!(lines[2].starts_with("entropy,0.3,24,"), "{csv}");

    let out = mot(
        dir,
        &["--config", "mot.toml", "sweep", "memory-size", "--fractions", "0.5,1"],
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let labels = common::world::codes().join(",");
    let question = world.test[2].question_text.clone();
    let out = mot(
        dir,
        &[
            "--config", "mot.toml", "--trace", "answer", &question, "--labels", &labels,
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), TOPICS[2].1);
    assert!(dir.join("reports/answer-trace.jsonl").exists());

    let unseen = common::world::question_text(TOPICS[2].0, 9999);
    let out = mot(dir, &["--config", "mot.toml", "answer", &unseen, "--labels", &labels]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn answer_uses_script_and_prints_value() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let script = r#"{"answers": {"What is 2+2?": [" 4."]}}"#;
    std::fs::write(dir.join("s.json"), script).unwrap();
    std::fs::write(dir.join("c.toml"), "[backend]\nscript = \"s.json\"\n").unwrap();
    let out = mot(
        dir,
        &[
            "--config",
            "c.toml",
            "answer",
            "--mode",
            "zero_shot_direct",
            "What is 2+2?",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "4");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mot(dir, &["answer", "hi"]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "scripted backend without script: {}",
        stderr(&out)
    );

    std::fs::write(dir.join("bad.toml"), "[backend]\nunknown = 1\n").unwrap();
    assert_eq!(
        mot(dir, &["--config", "bad.toml", "answer", "hi"]).status.code(),
        Some(1)
    );

    std::fs::write(dir.join("s.json"), r#"{"fallback": "The answer is 1."}"#).unwrap();
    std::fs::write(dir.join("c.toml"), "[backend]\nscript = \"s.json\"\n").unwrap();
    let out = mot(dir, &["--config", "c.toml", "answer", "--mode", "mot", "hi"]);
    assert_eq!(out.status.code(), Some(1), "missing pool: {}", stderr(&out));
    let out = mot(dir, &["--config", "c.toml", "answer", "--mode", "nonsense", "hi"]);
    assert_eq!(out.status.code(), Some(1));

    let out = mot(dir, &["--config", "c.toml", "prethink"]);
    assert_eq!(out.status.code(), Some(2), "missing task file: {}", stderr(&out));

    std::fs::write(dir.join("out.jsonl"), "not a pool\n").unwrap();
    std::fs::write(
        dir.join("p.toml"),
        "[backend]\nscript = \"s.json\"\n[paths]\npool = \"out.jsonl\"\n",
    )
    .unwrap();
    let out = mot(dir, &["--config", "p.toml", "answer", "--mode", "mot", "hi"]);
    assert_eq!(out.status.code(), Some(2), "corrupt pool: {}", stderr(&out));

    std::fs::write(dir.join("empty.json"), "{}").unwrap();
    std::fs::write(dir.join("e.toml"), "[backend]\nscript = \"empty.json\"\n").unwrap();
    let out = mot(
        dir,
        &["--config", "e.toml", "answer", "--mode", "zero_shot_direct", "hi"],
    );
    assert_eq!(out.status.code(), Some(1), "unscripted call: {}", stderr(&out));
}

fn predictions_without_timing(dir: &Path) -> Vec<serde_json::Value> {
    let run = std::fs::read_dir(dir.join("reports"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    std::fs::read_to_string(run.join("predictions.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["timing_ms"] = 0.into();
            v
        })
        .collect()
}

#[test]
fn commands_replay_identically() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        setup(d.path());
        for cmd in [&["prethink"][..], &["build-memory"], &["eval"]] {
            let mut args = vec!["--config", "mot.toml", "--max-in-flight", "3"];
            args.extend_from_slice(cmd);
            let out = mot(d.path(), &args);
            assert!(out.status.success(), "{}", stderr(&out));
        }
    }
    let (a, b) = (dirs[0].path(), dirs[1].path());
    for file in ["out/dump.jsonl", "out/entries.jsonl"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let pool = |d: &Path| {
        let mut p = mot::persist::load_pool(&d.join("out/pool.jsonl")).unwrap();
        p.build_meta.created_at.clear();
        p
    };
    assert_eq!(pool(a), pool(b));
    assert_eq!(predictions_without_timing(a), predictions_without_timing(b));
}

#[test]
fn flags_override_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    assert!(mot(dir, &["--config", "mot.toml", "prethink"]).status.success());
    let out = mot(
        dir,
        &["--config", "mot.toml", "--seed", "99", "build-memory", "--tau", "inf"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("kept 40 of 40"), "{}", stdout(&out));
    let pool = mot::persist::load_pool(&dir.join("out/pool.jsonl")).unwrap();
    assert_eq!(pool.build_meta.seed, 99);
    assert_eq!(pool.build_meta.tau, None);
    let out = mot(dir, &["--config", "mot.toml", "build-memory", "--filter", "gold"]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "gold filter without golds: {}",
        stderr(&out)
    );

    let world = World::new(40, 8);
    let golds: String = world
        .unlabeled
        .iter()
        .map(|i| {
            format!(
                "{}\n",
                serde_json::json!({"question_id": i.question_id, "golds": i.gold_answers})
            )
        })
        .collect();
    std::fs::write(dir.join("golds.jsonl"), golds).unwrap();
    let out = mot(
        dir,
        &[
            "--config",
            "mot.toml",
            "build-memory",
            "--filter",
            "gold",
            "--golds",
            "golds.jsonl",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("kept 40 of 40"), "{}", stdout(&out));
    let pool = mot::persist::load_pool(&dir.join("out/pool.jsonl")).unwrap();
    assert_eq!(pool.build_meta.filter, "gold");
    assert!(pool
        .entries
        .iter()
        .all(|e| e.source == mot_core::MemorySource::GoldFiltered));
}
