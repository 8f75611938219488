use std::path::Path;

use serde::Deserialize;

use super::{read_file, DatasetBundle, DatasetError, ExampleTriple};
use crate::sqlkit::{DifficultyLabel, Scheme};

#[derive(Debug, Deserialize)]
struct RawRecord {
    db_id: Option<String>,
    question: Option<String>,
    #[serde(alias = "SQL", alias = "sql_query")]
    query: Option<String>,
    evidence: Option<String>,
    difficulty: Option<String>,
}

/// Loads an examples file against the schemas already present in `bundle`.
///
/// Accepts a JSON array of records, or one record per line when the file
/// name ends in `.jsonl`.
pub fn load_examples(path: &Path, bundle: &DatasetBundle) -> Result<Vec<ExampleTriple>, DatasetError> {
    let text = read_file(path)?;
    let jsonl = path.extension().is_some_and(|e| e == "jsonl");
    parse_examples(&text, jsonl, bundle).map_err(|e| match e {
        DatasetError::Format { message, .. } => DatasetError::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_examples(text: &str, jsonl: bool, bundle: &DatasetBundle) -> Result<Vec<ExampleTriple>, DatasetError> {
    let format_err = |message: String| DatasetError::Format {
        path: Default::default(),
        message,
    };
    let records: Vec<RawRecord> = if jsonl {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| format_err(format!("line {}: {e}", n + 1))))
            .collect::<Result<_, _>>()?
    } else {
        serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?
    };

    let scheme = bundle.dialect().difficulty_scheme();
    let mut issues = Vec::new();
    let mut out = Vec::with_capacity(records.len());
    for (ordinal, rec) in records.into_iter().enumerate() {
        let (Some(db_id), Some(question), Some(query)) = (rec.db_id, rec.question, rec.query) else {
            issues.push(format!("record {ordinal}: missing db_id, question, or query field"));
            continue;
        };
        if query.trim().is_empty() {
            issues.push(format!("record {ordinal}: empty gold SQL"));
            continue;
        }
        if !bundle.schemas.contains_key(&db_id) {
            issues.push(format!("record {ordinal}: unknown db_id `{db_id}`"));
            continue;
        }
        let difficulty = match rec.difficulty {
            None => None,
            Some(raw) => match DifficultyLabel::parse(scheme, &raw) {
                Some(label) => Some(label),
                None => {
                    issues.push(format!("record {ordinal}: difficulty `{raw}` is not a {scheme} label"));
                    continue;
                }
            },
        };
        // Spider labels are computed from the gold SQL, never ingested.
        let difficulty = if scheme == Scheme::Spider4 { None } else { difficulty };
        out.push(ExampleTriple {
            index: out.len(),
            question,
            gold_sql: query,
            db_id,
            difficulty,
            evidence: rec.evidence,
        });
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(DatasetError::Invalid(issues))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatabaseSchema, Dialect};

    fn bundle(dialect: Dialect) -> DatasetBundle {
        let mut b = DatasetBundle::new("t", dialect);
        b.add_schemas(vec![DatabaseSchema {
            db_id: "concert_singer".into(),
            tables: vec![],
            primary_keys: vec![],
            foreign_keys: vec![],
        }])
        .unwrap();
        b
    }

    #[test]
    fn spider_record() {
        let text = r#"[{"db_id":"concert_singer","question":"How many singers do we have?","query":"SELECT count(*) FROM singer"}]"#;
        let ex = parse_examples(text, false, &bundle(Dialect::Spider)).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].index, 0);
        assert_eq!(ex[0].question, "How many singers do we have?");
        assert_eq!(ex[0].gold_sql, "SELECT count(*) FROM singer");
        assert_eq!(ex[0].difficulty, None);
        assert_eq!(ex[0].evidence, None);
    }

    #[test]
    fn empty_file() {
        assert!(parse_examples("[]", false, &bundle(Dialect::Spider)).unwrap().is_empty());
    }

    #[test]
    fn bird_record_keeps_evidence_verbatim() {
        let evidence = "Eligible free rate = `Free Meal Count (K-12)` / `Enrollment (K-12)`";
        let text = serde_json::json!([{
            "question_id": 0, "db_id": "concert_singer", "question": "q?",
            "evidence": evidence, "SQL": "SELECT 1", "difficulty": "challenging"
        }])
        .to_string();
        let ex = parse_examples(&text, false, &bundle(Dialect::Bird)).unwrap();
        assert_eq!(ex[0].evidence.as_deref(), Some(evidence));
        assert_eq!(ex[0].gold_sql, "SELECT 1");
        assert_eq!(ex[0].difficulty, Some(DifficultyLabel::Challenging));
    }

    #[test]
    fn unknown_db_and_missing_fields_are_all_reported() {
        let text = r#"[{"db_id":"nope","question":"q","query":"SELECT 1"},
                       {"db_id":"concert_singer","query":"SELECT 1"}]"#;
        let err = parse_examples(text, false, &bundle(Dialect::Spider)).unwrap_err();
        let issues = err.issues();
        assert_eq!(issues.len(), 2);
        assert!(issues[0].contains("record 0") && issues[0].contains("nope"));
        assert!(issues[1].contains("record 1"));
    }

    #[test]
    fn jsonl_input() {
        let text = "{\"db_id\":\"concert_singer\",\"question\":\"a\",\"query\":\"SELECT 1\"}\n\n{\"db_id\":\"concert_singer\",\"question\":\"b\",\"query\":\"SELECT 2\"}\n";
        let ex = parse_examples(text, true, &bundle(Dialect::Spider)).unwrap();
        assert_eq!(ex.iter().map(|e| e.index).collect::<Vec<_>>(), [0, 1]);
    }
}
