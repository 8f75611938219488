//! Hand-decomposed EM pairs and the pinned 40-query hardness set.

use std::path::PathBuf;

use serde::Deserialize;
use sqlharness::dataset::{load_schemas, DatabaseSchema};
use sqlharness::sqlkit::{classify_difficulty, diff_clauses, em_match, parse_sql, Clause, Scheme};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn schemas() -> Vec<DatabaseSchema> {
    load_schemas(&fixtures().join("spider/tables.json")).unwrap()
}

#[derive(Deserialize)]
struct Pair {
    id: u32,
    category: String,
    gold: String,
    pred: String,
    em: bool,
    #[serde(default)]
    diff: Vec<Clause>,
    #[serde(default)]
    parse_error: bool,
}

#[test]
fn em_pairs_agree_with_clause_oracle() {
    let all = schemas();
    let schema = all.iter().find(|s| s.db_id == "concert_singer").unwrap();
    let pairs: Vec<Pair> = serde_json::from_str(&std::fs::read_to_string(fixtures().join("em/pairs.json")).unwrap()).unwrap();
    assert!(pairs.len() >= 50);
    for cat in [
        "set-reorder",
        "literal-change",
        "alias-renaming",
        "distinct",
        "missing-clause",
        "order-direction",
        "nesting",
        "set-operation",
    ] {
        assert!(pairs.iter().any(|p| p.category == cat), "no {cat} pairs");
    }
    let mut wrong = Vec::new();
    for p in &pairs {
        let gold = parse_sql(&p.gold, schema).unwrap_or_else(|e| panic!("gold #{} fails to parse: {e}", p.id));
        match parse_sql(&p.pred, schema) {
            Err(_) if p.parse_error => {}
            Err(e) => wrong.push(format!("#{}: unexpected parse error {e}", p.id)),
            Ok(_) if p.parse_error => wrong.push(format!("#{}: expected a parse error", p.id)),
            Ok(pred) => {
                let em = em_match(&pred, &gold);
                let diff = diff_clauses(&pred, &gold);
                if em != p.em || diff != p.diff {
                    wrong.push(format!("#{}: em {em} diff {diff:?}, want em {} diff {:?}", p.id, p.em, p.diff));
                }
                if em_match(&gold, &pred) != em {
                    wrong.push(format!("#{}: not symmetric", p.id));
                }
            }
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}

#[derive(Deserialize)]
struct Pinned {
    db_id: String,
    query: String,
    hardness: String,
}

#[test]
fn pinned_hardness_set() {
    let all = schemas();
    let pinned: Vec<Pinned> = std::fs::read_to_string(fixtures().join("spider/hardness_40.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(pinned.len(), 40);
    for p in &pinned {
        let schema = all.iter().find(|s| s.db_id == p.db_id).unwrap();
        let unit = parse_sql(&p.query, schema).unwrap();
        let label = classify_difficulty(&unit, Scheme::Spider4).unwrap();
        assert_eq!(label.as_str(), p.hardness, "{}", p.query);
    }
}
