//! Subcommands run as a subprocess against the mini concert_singer dataset.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use common::*;
use sqlharness::corpus::{load_train_profile, read_corpus, TrainMethod};
use sqlharness::inference::read_predictions;
use sqlharness::inference::stub::{StubConfig, StubMode};

const OFFLINE: &str = "http://127.0.0.1:9/v1";

#[test]
fn ingest_missing_examples_file_names_the_path() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", OFFLINE, true, "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("dev = \"dev.json\"", "dev = \"nowhere.json\"");
    std::fs::write(&cfg, text).unwrap();
    let o = sqlharness(&cfg, &["ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.json"), "{}", stderr(&o));
    assert!(!ws.path().join("runs").exists(), "no side effects on invalid config");
}

#[test]
fn ingest_manifest_counts_and_determinism() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", OFFLINE, true, "");
    assert_ok(&sqlharness(&cfg, &["ingest", "--run-id", "a"]));
    assert_ok(&sqlharness(&cfg, &["ingest", "--run-id", "b"]));
    let a = std::fs::read(ws.path().join("runs/a/manifest.json")).unwrap();
    let b = std::fs::read(ws.path().join("runs/b/manifest.json")).unwrap();
    assert_eq!(a, b);
    let m: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(m["splits"]["train"], 25);
    assert_eq!(m["splits"]["dev"], 20);
    assert_eq!(m["databases"]["concert_singer"]["dev"], 20);
    assert_eq!(m["db_files_found"], serde_json::json!(["concert_singer"]));
}

#[test]
fn default_run_id_is_timestamp_and_fingerprint() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", OFFLINE, true, "");
    let o = sqlharness(&cfg, &["ingest"]);
    assert_ok(&o);
    let dir = stdout(&o).lines().last().unwrap().to_string();
    let id = Path::new(&dir).file_name().unwrap().to_str().unwrap().to_string();
    let (stamp, fp) = id.split_once('-').unwrap();
    assert_eq!(stamp.len(), 16, "{id}");
    assert!(stamp.ends_with('Z'));
    assert_eq!(fp.len(), 12);

    // Later commands find the same run directory.
    assert_ok(&sqlharness(&cfg, &["build-corpus", "--k", "0"]));
    assert!(Path::new(&dir).join("corpus/train_0shot.jsonl").is_file());

    // A different seed is a different configuration.
    let o = sqlharness(&cfg, &["ingest", "--seed", "7"]);
    assert!(!stdout(&o).trim_end().ends_with(fp));
}

#[test]
fn build_corpus_writes_one_file_per_k() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", OFFLINE, true, "");
    assert_ok(&sqlharness(&cfg, &["build-corpus", "--run-id", "r", "--k", "0,1,3,5"]));
    let dir = ws.path().join("runs/r/corpus");
    for k in [0, 1, 3, 5] {
        let recs = read_corpus(&dir.join(format!("train_{k}shot.jsonl"))).unwrap();
        assert_eq!(recs.len(), 25);
        assert!(recs.iter().all(|r| r.meta.shots == k));
        assert!(dir.join(format!("train_{k}shot.summary.json")).is_file());
    }
    assert_ok(&sqlharness(&cfg, &["build-corpus", "--run-id", "r", "--mode", "random-shot"]));
    let mixed = read_corpus(&dir.join("train_random-shot.jsonl")).unwrap();
    assert_eq!(mixed.len(), 25);
    let shots: BTreeSet<usize> = mixed.iter().map(|r| r.meta.shots).collect();
    assert!(shots.is_subset(&[0, 1, 3, 5].into()));
    assert!(std::fs::read_dir(&dir).unwrap().all(|e| !e.unwrap().path().to_string_lossy().contains("partial")));
}

#[test]
fn empty_split_gives_empty_corpus() {
    let ws = Workspace::new();
    std::fs::write(ws.path().join("train.json"), "[]").unwrap();
    let cfg = ws.config("c.toml", OFFLINE, true, "");
    assert_ok(&sqlharness(&cfg, &["build-corpus", "--run-id", "r", "--k", "1"]));
    let dir = ws.path().join("runs/r/corpus");
    assert!(read_corpus(&dir.join("train_1shot.jsonl")).unwrap().is_empty());
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("train_1shot.summary.json")).unwrap()).unwrap();
    assert_eq!(s["records"], 0);
}

#[test]
fn predict_then_evaluate_gold_echo() {
    let ws = Workspace::new();
    let (_rt, stub) = echo_stub();
    let cfg = ws.config("c.toml", &stub.base_url(), true, "");
    assert_ok(&sqlharness(&cfg, &["predict", "--run-id", "r", "--shots", "0"]));
    let preds = read_predictions(&ws.path().join("runs/r/predictions/dev_0shot.jsonl")).unwrap();
    assert_eq!(preds.len(), 20);
    assert!(preds.iter().all(|p| p.error.is_none()));
    assert_eq!(stub.request_count(), 20);

    // A finished prediction file is left alone.
    assert_ok(&sqlharness(&cfg, &["predict", "--run-id", "r", "--shots", "0"]));
    assert_eq!(stub.request_count(), 20);

    let o = sqlharness(&cfg, &["evaluate", "--run-id", "r"]);
    assert_ok(&o);
    let table = stdout(&o);
    let ex = table.lines().find(|l| l.starts_with("EX")).unwrap();
    let em = table.lines().find(|l| l.starts_with("EM")).unwrap();
    assert!(ex.ends_with("1.000"), "{table}");
    assert!(em.ends_with("1.000"), "{table}");
    for f in ["eval/dev_0shot.jsonl", "reports/dev_0shot.txt", "reports/dev_0shot.csv", "reports/dev_0shot.json"] {
        assert!(ws.path().join("runs/r").join(f).is_file(), "{f}");
    }
}

#[test]
fn five_shot_envelopes_carry_five_exemplars() {
    let ws = Workspace::new();
    let (_rt, stub) = echo_stub();
    let cfg = ws.config("c.toml", &stub.base_url(), true, "");
    assert_ok(&sqlharness(&cfg, &["predict", "--run-id", "r", "--shots", "5"]));
    let preds = read_predictions(&ws.path().join("runs/r/predictions/dev_5shot.jsonl")).unwrap();
    assert_eq!(preds.len(), 20);
    // Echo answers the last question in the prompt, which is the target.
    let golds = gold_map();
    let dev: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(ws.path().join("dev.json")).unwrap()).unwrap();
    for p in &preds {
        assert_eq!(p.extracted_sql, golds[dev[p.example_index]["question"].as_str().unwrap().trim()]);
    }
}

#[test]
fn golden_report_for_hand_scored_predictions() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", OFFLINE, true, "");
    let preds = ws.path().join("golden_predictions.jsonl");
    let o = sqlharness(&cfg, &["evaluate", "--run-id", "r", "--predictions", preds.to_str().unwrap()]);
    assert_ok(&o);
    let golden = std::fs::read_to_string(mini_fixture().join("golden_report.txt")).unwrap();
    let table = stdout(&o);
    let body: String = table.lines().skip(1).map(|l| format!("{l}\n")).collect();
    assert_eq!(body, golden);
    assert_eq!(std::fs::read_to_string(ws.path().join("runs/r/reports/golden_predictions.txt")).unwrap(), table);

    let records: Vec<serde_json::Value> = std::fs::read_to_string(ws.path().join("runs/r/eval/golden_predictions.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records[6]["failure"], "exec-error");
    assert_eq!(records[16]["failure"], "prediction-error");
}

#[test]
fn garbled_predictions_score_zero_and_exit_zero() {
    let ws = Workspace::new();
    let (_rt, stub) = start_stub(StubConfig::new(StubMode::Fixed("SELECT nonsense FROM nowhere".into())));
    let cfg = ws.config("c.toml", &stub.base_url(), true, "");
    assert_ok(&sqlharness(&cfg, &["predict", "--run-id", "r"]));
    let o = sqlharness(&cfg, &["evaluate", "--run-id", "r"]);
    assert_ok(&o);
    let table = stdout(&o);
    assert!(table.lines().find(|l| l.starts_with("EX")).unwrap().ends_with("0.000"), "{table}");
    assert!(table.lines().find(|l| l.starts_with("EM")).unwrap().ends_with("0.000"), "{table}");
}

#[test]
fn em_only_without_databases_marks_ex_na() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", OFFLINE, false, "[metrics]\nex = false\nves = false\n");
    let preds = ws.path().join("golden_predictions.jsonl");
    let o = sqlharness(&cfg, &["evaluate", "--run-id", "r", "--predictions", preds.to_str().unwrap()]);
    assert_ok(&o);
    let table = stdout(&o);
    let ex = table.lines().find(|l| l.starts_with("EX")).unwrap();
    assert!(ex.split_whitespace().skip(1).all(|c| c == "n/a"), "{table}");
    assert!(table.lines().find(|l| l.starts_with("EM")).unwrap().ends_with("0.600"));
}

#[test]
fn compare_identical_and_mismatched_schemes() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", OFFLINE, true, "");
    let preds = ws.path().join("golden_predictions.jsonl");
    assert_ok(&sqlharness(&cfg, &["evaluate", "--run-id", "r", "--predictions", preds.to_str().unwrap()]));
    let csv = ws.path().join("runs/r/reports/golden_predictions.csv");
    let out = ws.path().join("delta.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_sqlharness"))
        .args(["compare", csv.to_str().unwrap(), csv.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap(), "--format", "csv"])
        .output()
        .unwrap();
    assert_ok(&o);
    let delta = sqlharness::report::parse_delta_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let zero = sqlharness::report::Rate::from_integer(0);
    assert_eq!(delta.overall.em, Some(zero));
    assert_eq!(delta.overall.ex, Some(zero));

    let bird = ws.path().join("bird.csv");
    std::fs::write(
        &bird,
        "run_id,config_fingerprint,scheme,bucket,n,em_correct,ex_correct,em_scored,ex_scored,ves_mean,em_rate,ex_rate\n\
         b,fp,bird3,simple,1,1,1,true,true,,1,1\n\
         b,fp,bird3,moderate,0,0,0,true,true,,,\n\
         b,fp,bird3,challenge,0,0,0,true,true,,,\n\
         b,fp,bird3,overall,1,1,1,true,true,,1,1\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sqlharness"))
        .args(["compare", csv.to_str().unwrap(), bird.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("spider4") && err.contains("bird3"), "{err}");
}

#[test]
fn emit_train_profile_defaults_and_qlora() {
    let ws = Workspace::new();
    let out = ws.path().join("p.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_sqlharness"))
        .args(["emit-train-profile", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_ok(&o);
    let p = load_train_profile(&out).unwrap();
    assert_eq!((p.lora_rank, p.lora_alpha, p.epochs), (64, 32, 8));
    assert_eq!((p.max_source_length, p.max_target_length), (2048, 512));
    assert_eq!(p.learning_rate, 0.0002);

    let cfg = ws.config("c.toml", OFFLINE, true, "");
    assert_ok(&sqlharness(&cfg, &["emit-train-profile", "--run-id", "r", "--method", "qlora"]));
    let q = load_train_profile(&ws.path().join("runs/r/train/qlora.toml")).unwrap();
    assert_eq!(q.method, TrainMethod::Qlora);
}

#[test]
fn interrupted_predict_resumes_without_duplicates() {
    let ws = Workspace::new();
    let mut slow = StubConfig::new(StubMode::GoldEcho(gold_map()));
    slow.delay = Duration::from_millis(150);
    let (_rt, stub) = start_stub(slow);
    let cfg = ws.config("c.toml", &stub.base_url(), true, "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("concurrency_limit = 4", "concurrency_limit = 2");
    std::fs::write(&cfg, text).unwrap();

    let partial = ws.path().join("runs/r/predictions/dev_0shot.partial");
    let mut child = Command::new(env!("CARGO_BIN_EXE_sqlharness"))
        .arg("--config")
        .arg(&cfg)
        .args(["predict", "--run-id", "r"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let lines = std::fs::read_to_string(&partial).map(|t| t.lines().count()).unwrap_or(0);
        if lines >= 5 {
            break;
        }
        assert!(Instant::now() < deadline, "predict made no progress");
        std::thread::sleep(Duration::from_millis(20));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let before = read_predictions(&partial).unwrap().len();
    assert!(before < 20, "killed too late to test resume");
    let sent = stub.request_count();

    assert_ok(&sqlharness(&cfg, &["predict", "--run-id", "r"]));
    let preds = read_predictions(&ws.path().join("runs/r/predictions/dev_0shot.jsonl")).unwrap();
    let idx: Vec<usize> = preds.iter().map(|p| p.example_index).collect();
    assert_eq!(idx, (0..20).collect::<Vec<_>>());
    assert!(preds.iter().all(|p| p.error.is_none()));
    assert!(!partial.exists());
    assert_eq!(stub.request_count() - sent, 20 - before);
}
