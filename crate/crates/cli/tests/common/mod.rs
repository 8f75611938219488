#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rusqlite::Connection;
use sqlharness::inference::stub::{StubConfig, StubMode, StubServer};
use tempfile::TempDir;

pub fn mini_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

pub fn core_fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

/// A scratch copy of the mini dataset with its database built.
pub struct Workspace {
    pub dir: TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for f in ["tables.json", "train.json", "dev.json", "golden_predictions.jsonl"] {
            std::fs::copy(mini_fixture().join(f), dir.path().join(f)).unwrap();
        }
        let db = dir.path().join("database/concert_singer/concert_singer.sqlite");
        std::fs::create_dir_all(db.parent().unwrap()).unwrap();
        let sql = std::fs::read_to_string(mini_fixture().join("concert_singer.sql")).unwrap();
        Connection::open(&db).unwrap().execute_batch(&sql).unwrap();
        Workspace { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Writes `name` with the standard settings; `with_db` controls
    /// whether database files are configured, `extra` is appended verbatim.
    pub fn config(&self, name: &str, base_url: &str, with_db: bool, extra: &str) -> PathBuf {
        let db_dir = if with_db { "db_dir = \"database\"\n" } else { "" };
        let text = format!(
            r#"seed = 42
output_dir = "runs"

[dataset]
name = "spider-mini"
dialect = "spider"
tables = "tables.json"
{db_dir}
[dataset.splits]
train = "train.json"
dev = "dev.json"

[endpoint]
base_url = "{base_url}"
model_name = "stub"
record_latency = false
max_retries = 2
backoff_ms = 10
concurrency_limit = 4

{extra}
"#
        );
        let path = self.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    }
}

pub fn sqlharness(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqlharness"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(o), stderr(o));
}

/// Question -> gold SQL over both mini splits.
pub fn gold_map() -> HashMap<String, String> {
    let mut m = HashMap::new();
    for f in ["train.json", "dev.json"] {
        let v: Vec<serde_json::Value> =
            serde_json::from_str(&std::fs::read_to_string(mini_fixture().join(f)).unwrap()).unwrap();
        for e in v {
            m.insert(
                e["question"].as_str().unwrap().trim().to_string(),
                e["query"].as_str().unwrap().to_string(),
            );
        }
    }
    m
}

/// A stub server on its own runtime; it lives as long as the returned pair.
pub fn start_stub(config: StubConfig) -> (tokio::runtime::Runtime, StubServer) {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let server = rt.block_on(StubServer::start(config)).unwrap();
    (rt, server)
}

pub fn echo_stub() -> (tokio::runtime::Runtime, StubServer) {
    start_stub(StubConfig::new(StubMode::GoldEcho(gold_map())))
}

/// Every file under `root`, relative path -> bytes.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Runs ingest through evaluate into `{output_dir}/{run_id}`.
pub fn full_pipeline(config: &Path, output_dir: &Path, run_id: &str) {
    let out = output_dir.to_str().unwrap();
    let g = ["--output-dir", out, "--run-id", run_id];
    for cmd in [
        vec!["ingest"],
        vec!["build-corpus", "--k", "0,1,3,5"],
        vec!["build-corpus", "--mode", "random-shot"],
        vec!["predict", "--split", "dev", "--shots", "1"],
        vec!["evaluate", "--predictions", &format!("{out}/{run_id}/predictions/dev_1shot.jsonl")],
    ] {
        let mut args: Vec<&str> = cmd.clone();
        args.extend(g);
        assert_ok(&sqlharness(config, &args));
    }
}
