use std::cmp::Ordering;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode, OpenFlags};
use serde::{Deserialize, Serialize};

use crate::sqlkit::has_top_level_order_by;

/// One result cell. Integers and reals compare numerically with a relative
/// tolerance; text and blobs compare byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Cell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

pub const REL_TOL: f64 = 1e-6;

impl Cell {
    fn number(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Real(r) => Some(*r),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Int(_) | Cell::Real(_) => 1,
            Cell::Text(_) => 2,
            Cell::Blob(_) => 3,
        }
    }

    /// Total order used to line up multisets before comparison.
    fn sort_cmp(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a.cmp(b),
            (a, b) if a.rank() == 1 && b.rank() == 1 => a.number().unwrap().total_cmp(&b.number().unwrap()),
            (Cell::Text(a), Cell::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (Cell::Blob(a), Cell::Blob(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl PartialEq for Cell {
    fn eq(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Null, Cell::Null) => true,
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Text(a), Cell::Text(b)) => a == b,
            (Cell::Blob(a), Cell::Blob(b)) => a == b,
            (a, b) => match (a.number(), b.number()) {
                (Some(x), Some(y)) => x == y || (x - y).abs() <= REL_TOL * x.abs().max(y.abs()),
                _ => false,
            },
        }
    }
}

pub type Row = Vec<Cell>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOutcome {
    pub rows: Vec<Row>,
    pub elapsed: Duration,
    /// The statement orders its final result, so row order matters.
    pub ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("database unavailable: {0}")]
    DbUnavailable(String),
    #[error("query exceeded the {0:?} time limit")]
    Timeout(Duration),
    #[error("{0}")]
    Sql(String),
}

pub fn open_read_only(db_file: &Path) -> Result<Connection, ExecError> {
    if !db_file.is_file() {
        return Err(ExecError::DbUnavailable(format!("{} not found", db_file.display())));
    }
    let conn = Connection::open_with_flags(db_file, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
        .map_err(|e| ExecError::DbUnavailable(e.to_string()))?;
    conn.execute_batch("PRAGMA query_only = 1;")
        .map_err(|e| ExecError::DbUnavailable(e.to_string()))?;
    Ok(conn)
}

/// Runs `sql` on a fresh read-only connection and fetches every row.
pub fn execute_sql(sql: &str, db_file: &Path, timeout: Duration) -> Result<ExecOutcome, ExecError> {
    let conn = open_read_only(db_file)?;
    execute_on(&conn, sql, timeout)
}

pub fn execute_on(conn: &Connection, sql: &str, timeout: Duration) -> Result<ExecOutcome, ExecError> {
    let started = Instant::now();
    let deadline = started + timeout;
    conn.progress_handler(1000, Some(move || Instant::now() >= deadline));
    let result = fetch(conn, sql);
    let elapsed = started.elapsed();
    conn.progress_handler(0, None::<fn() -> bool>);
    match result {
        Ok(rows) => Ok(ExecOutcome {
            rows,
            elapsed,
            ordered: has_top_level_order_by(sql),
        }),
        Err(FetchError::Sqlite(e)) if e.sqlite_error_code() == Some(ErrorCode::OperationInterrupted) => {
            Err(ExecError::Timeout(timeout))
        }
        Err(FetchError::Sqlite(e)) => Err(ExecError::Sql(e.to_string())),
        Err(FetchError::TooLarge) => Err(ExecError::Sql(format!("result exceeds {MAX_RESULT_ROWS} rows"))),
    }
}

/// Rows kept in memory per result. Past this the statement keeps running
/// (so a runaway query still ends in a timeout) but rows are discarded and
/// the result becomes an error.
pub const MAX_RESULT_ROWS: usize = 5_000_000;

enum FetchError {
    Sqlite(rusqlite::Error),
    TooLarge,
}

impl From<rusqlite::Error> for FetchError {
    fn from(e: rusqlite::Error) -> Self {
        FetchError::Sqlite(e)
    }
}

fn fetch(conn: &Connection, sql: &str) -> Result<Vec<Row>, FetchError> {
    let mut stmt = conn.prepare(sql)?;
    let ncol = stmt.column_count();
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    let mut overflow = false;
    while let Some(r) = rows.next()? {
        if overflow || out.len() >= MAX_RESULT_ROWS {
            overflow = true;
            continue;
        }
        let mut row = Vec::with_capacity(ncol);
        for i in 0..ncol {
            row.push(match r.get_ref(i)? {
                ValueRef::Null => Cell::Null,
                ValueRef::Integer(v) => Cell::Int(v),
                ValueRef::Real(v) => Cell::Real(v),
                ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
                ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
            });
        }
        out.push(row);
    }
    if overflow {
        return Err(FetchError::TooLarge);
    }
    Ok(out)
}

/// Equal as sequences when `ordered`, as multisets of tuples otherwise.
pub fn results_match(pred: &[Row], gold: &[Row], ordered: bool) -> bool {
    if pred.len() != gold.len() {
        return false;
    }
    if ordered {
        return pred.iter().zip(gold).all(|(a, b)| a == b);
    }
    sorted(pred).iter().zip(sorted(gold)).all(|(a, b)| *a == b)
}

fn sorted(rows: &[Row]) -> Vec<&Row> {
    let mut v: Vec<&Row> = rows.iter().collect();
    v.sort_by(|a, b| row_cmp(a, b));
    v
}

fn row_cmp(a: &Row, b: &Row) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.sort_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}
