use std::path::{Path, PathBuf};
use std::time::Duration;

use rusqlite::Connection;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use sqlharness::dataset::{introspect_database, DatasetBundle, Dialect, ExampleTriple};
use sqlharness::inference::Prediction;
use sqlharness::metrics::{execute_sql, score_ex, score_run, Cell, EvalFailure, ExecError, ScoreOptions};
use sqlharness::sqlkit::{parse_sql_with, ParseOptions};

#[derive(Deserialize)]
struct Pair {
    id: u32,
    gold: String,
    pred: String,
    expect: String,
    #[serde(default)]
    failure: Option<EvalFailure>,
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/exec")
}

fn build_db(dir: &Path) -> PathBuf {
    let path = dir.join("exfix").join("exfix.sqlite");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    let ddl = std::fs::read_to_string(fixture_dir().join("exfix.sql")).unwrap();
    Connection::open(&path).unwrap().execute_batch(&ddl).unwrap();
    path
}

fn pairs() -> Vec<Pair> {
    serde_json::from_str(&std::fs::read_to_string(fixture_dir().join("pairs.json")).unwrap()).unwrap()
}

fn checksum(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

#[test]
fn ex_pairs_agree_with_hand_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    let before = checksum(&db);
    let pairs = pairs();
    assert!(pairs.len() >= 30);
    let mut wrong = Vec::new();
    for p in &pairs {
        let v = score_ex(&p.pred, &p.gold, &db, Duration::from_secs(2), 0);
        let got = match v.ex {
            Some(true) => "match",
            Some(false) => "mismatch",
            None => "gold-error",
        };
        if got != p.expect || v.failure != p.failure {
            wrong.push(format!("#{}: got {got} {:?}, want {} {:?}", p.id, v.failure, p.expect, p.failure));
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
    assert_eq!(checksum(&db), before);
}

#[test]
fn execute_sql_contract() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    let one = execute_sql("SELECT 1", &db, Duration::from_secs(1)).unwrap();
    assert_eq!(one.rows, vec![vec![Cell::Int(1)]]);
    assert!(one.elapsed > Duration::ZERO);
    assert!(matches!(
        execute_sql("SELECT nonexistent FROM nowhere", &db, Duration::from_secs(1)),
        Err(ExecError::Sql(_))
    ));
    let runaway = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x+1 FROM c) SELECT * FROM c";
    assert!(matches!(
        execute_sql(runaway, &db, Duration::from_secs(2)),
        Err(ExecError::Timeout(_))
    ));
    assert!(matches!(
        execute_sql("SELECT 1", &dir.path().join("missing.sqlite"), Duration::from_secs(1)),
        Err(ExecError::DbUnavailable(_))
    ));
    let ordered = execute_sql("SELECT name FROM stadium ORDER BY capacity", &db, Duration::from_secs(1)).unwrap();
    assert!(ordered.ordered);
}

#[test]
fn ves_self_comparison_is_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    // Heavy enough that timer resolution does not dominate.
    let q = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x+1 FROM c WHERE x < 200000) SELECT sum(x) FROM c";
    let v = score_ex(q, q, &db, Duration::from_secs(10), 3);
    assert_eq!(v.ex, Some(true));
    let r = v.ves_ratio.unwrap();
    assert!((0.5..=2.0).contains(&r), "ratio {r}");
}

fn exfix_bundle(db: &Path) -> (DatasetBundle, Vec<ExampleTriple>) {
    let mut bundle = DatasetBundle::new("exfix", Dialect::Spider);
    bundle.add_schemas(vec![introspect_database(db).unwrap()]).unwrap();
    bundle.db_files.insert("exfix".into(), db.to_path_buf());
    let examples = pairs()
        .into_iter()
        .filter(|p| p.expect != "gold-error")
        .enumerate()
        .map(|(i, p)| ExampleTriple {
            index: i,
            question: format!("question {}", p.id),
            gold_sql: p.gold,
            db_id: "exfix".into(),
            difficulty: None,
            evidence: None,
        })
        .collect();
    (bundle, examples)
}

fn prediction(index: usize, sql: &str) -> Prediction {
    Prediction {
        example_index: index,
        raw_text: sql.into(),
        extracted_sql: sql.into(),
        latency_ms: 0,
        attempt_count: 1,
        error: None,
    }
}

fn quick() -> ScoreOptions {
    ScoreOptions {
        timeout_ms: 2000,
        ..Default::default()
    }
}

#[test]
fn gold_echo_scores_everything_correct() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    let (bundle, examples) = exfix_bundle(&db);
    let preds: Vec<_> = examples.iter().map(|e| prediction(e.index, &e.gold_sql)).collect();
    let records = score_run(&examples, &preds, &bundle, &quick());
    assert_eq!(records.len(), examples.len());
    for r in &records {
        assert_eq!((r.em, r.ex, r.failure), (Some(true), Some(true), None), "{r:?}");
        assert!(r.difficulty.is_some());
    }
}

#[test]
fn select_one_matches_only_single_one_results() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    let (bundle, examples) = exfix_bundle(&db);
    let preds: Vec<_> = examples.iter().map(|e| prediction(e.index, "SELECT 1")).collect();
    let records = score_run(&examples, &preds, &bundle, &quick());

    let conn = Connection::open(&db).unwrap();
    for (e, r) in examples.iter().zip(&records) {
        let mut stmt = conn.prepare(&e.gold_sql).unwrap();
        let n = stmt.column_count();
        let rows: Vec<Vec<rusqlite::types::Value>> = stmt
            .query_map([], |row| (0..n).map(|i| row.get(i)).collect())
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        let single_one = rows.len() == 1
            && rows[0].len() == 1
            && match &rows[0][0] {
                rusqlite::types::Value::Integer(1) => true,
                rusqlite::types::Value::Real(x) => *x == 1.0,
                _ => false,
            };
        assert_eq!(r.ex, Some(single_one), "{}", e.gold_sql);
        assert_eq!(r.em, Some(e.gold_sql == "SELECT 1"));
    }
}

#[test]
fn em_only_without_databases() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    let (mut bundle, examples) = exfix_bundle(&db);
    bundle.db_files.clear();
    let preds: Vec<_> = examples.iter().map(|e| prediction(e.index, &e.gold_sql)).collect();
    let opts = ScoreOptions {
        ex: false,
        ..quick()
    };
    let records = score_run(&examples, &preds, &bundle, &opts);
    assert_eq!(records.len(), preds.len());
    assert!(records.iter().all(|r| r.ex.is_none() && r.em == Some(true) && r.failure.is_none()));
}

#[test]
fn missing_database_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    let (mut bundle, examples) = exfix_bundle(&db);
    bundle.db_files.clear();
    let preds = vec![prediction(0, &examples[0].gold_sql)];
    let records = score_run(&examples[..1], &preds, &bundle, &quick());
    assert_eq!(records[0].failure, Some(EvalFailure::DbUnavailable));
    assert_eq!(records[0].ex, None);
}

#[test]
fn missing_prediction_is_a_prediction_error() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    let (bundle, examples) = exfix_bundle(&db);
    let records = score_run(&examples[..2], &[prediction(1, "SELECT 1")], &bundle, &quick());
    assert_eq!(records[0].failure, Some(EvalFailure::PredictionError));
    assert_eq!((records[0].em, records[0].ex), (Some(false), Some(false)));
}

#[test]
fn literal_identical_em_implies_ex() {
    let dir = tempfile::tempdir().unwrap();
    let db = build_db(dir.path());
    let (bundle, _) = exfix_bundle(&db);
    let schema = bundle.schema("exfix").unwrap();
    let exact = ParseOptions { mask_literals: false };
    let conn = Connection::open(&db).unwrap();
    let mut checked = 0;
    for p in pairs().iter().filter(|p| p.expect != "gold-error") {
        let (Ok(a), Ok(b)) = (parse_sql_with(&p.pred, schema, exact), parse_sql_with(&p.gold, schema, exact)) else {
            continue;
        };
        // EM treats the select list as a set but EX compares columns by
        // position, so column permutations are outside the implication.
        if a == b && column_names(&conn, &p.pred) == column_names(&conn, &p.gold) {
            checked += 1;
            let v = score_ex(&p.pred, &p.gold, &db, Duration::from_secs(2), 0);
            assert_eq!(v.ex, Some(true), "#{}", p.id);
        }
    }
    assert!(checked > 0);
}

fn column_names(conn: &Connection, sql: &str) -> Vec<String> {
    let stmt = conn.prepare(sql).unwrap();
    stmt.column_names().iter().map(|c| c.to_ascii_lowercase()).collect()
}
