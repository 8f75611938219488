//! EM, EX and VES scoring.

mod exec;

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatabaseSchema, DatasetBundle, ExampleTriple};
use crate::inference::Prediction;
use crate::par::{self, Parallelism};
use crate::sqlkit::{classify_difficulty, em_match, parse_sql, DifficultyLabel, Scheme};

pub use exec::{execute_on, execute_sql, open_read_only, results_match, Cell, ExecError, ExecOutcome, Row, REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalFailure {
    ParseError,
    ExecError,
    Timeout,
    DbUnavailable,
    PredictionError,
    /// The gold query itself failed to parse or execute.
    DatasetError,
}

/// Per-example verdicts. `None` means the metric was not computed for
/// this example (disabled, or excluded because of the failure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub example_index: usize,
    pub em: Option<bool>,
    pub ex: Option<bool>,
    pub ves_ratio: Option<f64>,
    pub difficulty: Option<DifficultyLabel>,
    pub failure: Option<EvalFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub em: bool,
    pub ex: bool,
    pub ves: bool,
    pub timeout_ms: u64,
    /// Timed runs per query for VES; the median is used.
    pub ves_runs: usize,
    pub parallelism: Parallelism,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            em: true,
            ex: true,
            ves: false,
            timeout_ms: 30_000,
            ves_runs: 3,
            parallelism: Parallelism::default(),
        }
    }
}

impl ScoreOptions {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Exact-set match of two SQL strings; an unparseable prediction is a miss.
pub fn score_em(pred_sql: &str, gold_sql: &str, schema: &DatabaseSchema) -> bool {
    match (parse_sql(pred_sql, schema), parse_sql(gold_sql, schema)) {
        (Ok(p), Ok(g)) => em_match(&p, &g),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExVerdict {
    pub ex: Option<bool>,
    pub ves_ratio: Option<f64>,
    pub failure: Option<EvalFailure>,
}

/// Executes both queries and compares results. With `ves_runs > 0`, a
/// correct prediction also gets `sqrt(gold_time / pred_time)` from the
/// median of that many timed runs each.
pub fn score_ex(pred_sql: &str, gold_sql: &str, db_file: &Path, timeout: Duration, ves_runs: usize) -> ExVerdict {
    let verdict = |ex, failure| ExVerdict {
        ex,
        ves_ratio: None,
        failure,
    };
    let conn = match open_read_only(db_file) {
        Ok(c) => c,
        Err(_) => return verdict(None, Some(EvalFailure::DbUnavailable)),
    };
    let gold = match execute_on(&conn, gold_sql, timeout) {
        Ok(g) => g,
        Err(e) => {
            tracing::warn!(db = %db_file.display(), "gold query failed: {e}");
            return verdict(None, Some(EvalFailure::DatasetError));
        }
    };
    let pred = match execute_on(&conn, pred_sql, timeout) {
        Ok(p) => p,
        Err(ExecError::Timeout(_)) => return verdict(Some(false), Some(EvalFailure::Timeout)),
        Err(ExecError::DbUnavailable(_)) => return verdict(None, Some(EvalFailure::DbUnavailable)),
        Err(ExecError::Sql(_)) => return verdict(Some(false), Some(EvalFailure::ExecError)),
    };
    if !results_match(&pred.rows, &gold.rows, gold.ordered) {
        return verdict(Some(false), None);
    }
    if ves_runs == 0 {
        return verdict(Some(true), None);
    }
    let mut g_times = vec![gold.elapsed];
    let mut p_times = vec![pred.elapsed];
    for _ in 1..ves_runs {
        if let (Ok(g), Ok(p)) = (execute_on(&conn, gold_sql, timeout), execute_on(&conn, pred_sql, timeout)) {
            g_times.push(g.elapsed);
            p_times.push(p.elapsed);
        }
    }
    let g = median(&mut g_times).as_secs_f64();
    let p = median(&mut p_times).as_secs_f64().max(1e-9);
    ExVerdict {
        ex: Some(true),
        ves_ratio: Some((g / p).sqrt()),
        failure: None,
    }
}

fn median(v: &mut [Duration]) -> Duration {
    v.sort();
    v[v.len() / 2]
}

/// Scores every example; a missing or failed prediction yields a
/// `prediction-error` record. Output is sorted by example index.
pub fn score_run(
    examples: &[ExampleTriple],
    predictions: &[Prediction],
    bundle: &DatasetBundle,
    opts: &ScoreOptions,
) -> Vec<EvalRecord> {
    let by_index: HashMap<usize, &Prediction> = predictions.iter().map(|p| (p.example_index, p)).collect();
    let scheme = bundle.dialect().difficulty_scheme();
    let mut records = par::map(examples, opts.parallelism, |ex| {
        score_example(ex, by_index.get(&ex.index).copied(), bundle, scheme, opts)
    });
    records.sort_by_key(|r| r.example_index);
    records
}

fn score_example(
    ex: &ExampleTriple,
    pred: Option<&Prediction>,
    bundle: &DatasetBundle,
    scheme: Scheme,
    opts: &ScoreOptions,
) -> EvalRecord {
    let schema = bundle.schema(&ex.db_id);
    let gold_unit = schema.and_then(|s| parse_sql(&ex.gold_sql, s).ok());
    let difficulty = match scheme {
        Scheme::Spider4 => gold_unit.as_ref().and_then(|u| classify_difficulty(u, scheme).ok()),
        Scheme::Bird3 => ex.difficulty,
    };
    let mut rec = EvalRecord {
        example_index: ex.index,
        em: None,
        ex: None,
        ves_ratio: None,
        difficulty,
        failure: None,
    };
    let Some(pred) = pred.filter(|p| p.error.is_none() && !p.extracted_sql.is_empty()) else {
        rec.em = opts.em.then_some(false);
        rec.ex = opts.ex.then_some(false);
        rec.failure = Some(EvalFailure::PredictionError);
        return rec;
    };

    let mut failures = Vec::new();
    if opts.em {
        match (&gold_unit, schema) {
            (Some(g), Some(s)) => match parse_sql(&pred.extracted_sql, s) {
                Ok(p) => rec.em = Some(em_match(&p, g)),
                Err(_) => {
                    rec.em = Some(false);
                    failures.push(EvalFailure::ParseError);
                }
            },
            _ => failures.push(EvalFailure::DatasetError),
        }
    }
    if opts.ex {
        match bundle.db_file(&ex.db_id) {
            None => failures.push(EvalFailure::DbUnavailable),
            Some(db) => {
                let runs = if opts.ves { opts.ves_runs.max(1) } else { 0 };
                let v = score_ex(&pred.extracted_sql, &ex.gold_sql, db, opts.timeout(), runs);
                rec.ex = v.ex;
                rec.ves_ratio = v.ves_ratio;
                failures.extend(v.failure);
            }
        }
    }
    rec.failure = failures.into_iter().min_by_key(|f| failure_priority(*f));
    rec
}

fn failure_priority(f: EvalFailure) -> u8 {
    match f {
        EvalFailure::PredictionError => 0,
        EvalFailure::DatasetError => 1,
        EvalFailure::DbUnavailable => 2,
        EvalFailure::Timeout => 3,
        EvalFailure::ExecError => 4,
        EvalFailure::ParseError => 5,
    }
}

pub fn write_eval_records(path: &Path, records: &[EvalRecord]) -> std::io::Result<()> {
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r).expect("record serializes"));
        body.push('\n');
    }
    std::fs::write(path, body)
}

pub fn read_eval_records(path: &Path) -> std::io::Result<Vec<EvalRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}
