//! Read-only statement execution with a wall-clock limit.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// One result cell. Reals with an integral value become integers so that
/// `1.0` and `1` compare equal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Integer(_) => 1,
            Cell::Real(_) => 2,
            Cell::Text(_) => 3,
            Cell::Blob(_) => 4,
        }
    }

    fn from_ref(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Integer(i),
            ValueRef::Real(f) => {
                if f.fract() == 0.0 && f.is_finite() && f.abs() < 9.0e15 {
                    Cell::Integer(f as i64)
                } else {
                    Cell::Real(f)
                }
            }
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
        }
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Cell::Integer(a), Cell::Integer(b)) => a.cmp(b),
            (Cell::Real(a), Cell::Real(b)) => a.total_cmp(b),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (Cell::Blob(a), Cell::Blob(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("NULL"),
            Cell::Integer(i) => write!(f, "{i}"),
            Cell::Real(r) => write!(f, "{r}"),
            Cell::Text(t) => f.write_str(t),
            Cell::Blob(b) => write!(f, "x'{}'", hex::encode(b)),
        }
    }
}

pub type Row = Vec<Cell>;
pub type RowSet = BTreeSet<Row>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Rows,
    Error,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    /// Present exactly when `status` is `Rows`.
    pub rows: Option<RowSet>,
    pub error: Option<String>,
    pub elapsed: Duration,
}

impl ExecutionOutcome {
    fn failed(status: ExecStatus, message: String, started: Instant) -> Self {
        Self { status, rows: None, error: Some(message), elapsed: started.elapsed() }
    }
}

/// Runs one statement on a fresh read-only connection. Never fails; errors
/// and timeouts are reported in the outcome.
pub fn execute_sql(db_file: &Path, sql: &str, timeout: Duration) -> ExecutionOutcome {
    let started = Instant::now();
    let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX;
    if !db_file.is_file() {
        return ExecutionOutcome::failed(ExecStatus::Error, format!("database file {} not found", db_file.display()), started);
    }
    let conn = match Connection::open_with_flags(db_file, flags) {
        Ok(c) => c,
        Err(e) => return ExecutionOutcome::failed(ExecStatus::Error, e.to_string(), started),
    };
    let deadline = started + timeout;
    conn.progress_handler(1000, Some(move || Instant::now() >= deadline));
    match collect_rows(&conn, sql) {
        Ok(rows) => ExecutionOutcome { status: ExecStatus::Rows, rows: Some(rows), error: None, elapsed: started.elapsed() },
        Err(e) if Instant::now() >= deadline && is_interrupt(&e) => {
            ExecutionOutcome::failed(ExecStatus::Timeout, format!("timed out after {:?}", timeout), started)
        }
        Err(e) => ExecutionOutcome::failed(ExecStatus::Error, e.to_string(), started),
    }
}

fn is_interrupt(e: &rusqlite::Error) -> bool {
    matches!(e, rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::OperationInterrupted)
}

fn collect_rows(conn: &Connection, sql: &str) -> rusqlite::Result<RowSet> {
    let mut stmt = conn.prepare(sql)?;
    let width = stmt.column_count();
    let mut rows = stmt.query([])?;
    let mut out = RowSet::new();
    while let Some(row) = rows.next()? {
        let mut tuple = Vec::with_capacity(width);
        for i in 0..width {
            tuple.push(Cell::from_ref(row.get_ref(i)?));
        }
        out.insert(tuple);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExVerdict {
    Correct,
    Incorrect,
    /// The gold query itself failed; the example is left out of EX.
    GoldInvalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExComparison {
    pub verdict: ExVerdict,
    pub pred_status: ExecStatus,
    pub gold_status: ExecStatus,
    pub message: Option<String>,
}

/// Set-of-tuples comparison of predicted and gold results.
pub fn compare_execution(pred_sql: &str, gold_sql: &str, db_file: &Path, timeout: Duration) -> ExComparison {
    let gold = execute_sql(db_file, gold_sql, timeout);
    let pred = execute_sql(db_file, pred_sql, timeout);
    let (verdict, message) = match (&gold.rows, &pred.rows) {
        (None, _) => {
            log::warn!("gold SQL failed on {}: {}", db_file.display(), gold.error.as_deref().unwrap_or(""));
            (ExVerdict::GoldInvalid, gold.error.clone().map(|e| format!("gold: {e}")))
        }
        (Some(_), None) => (ExVerdict::Incorrect, pred.error.clone().map(|e| format!("prediction: {e}"))),
        (Some(g), Some(p)) if g == p => (ExVerdict::Correct, None),
        (Some(_), Some(_)) => (ExVerdict::Incorrect, None),
    };
    ExComparison { verdict, pred_status: pred.status, gold_status: gold.status, message }
}

/// `true` iff both run and return the same row set. A failing gold query
/// also gives `false`; use [`compare_execution`] to tell the cases apart.
pub fn execution_accuracy(pred_sql: &str, gold_sql: &str, db_file: &Path) -> bool {
    compare_execution(pred_sql, gold_sql, db_file, DEFAULT_TIMEOUT).verdict == ExVerdict::Correct
}
