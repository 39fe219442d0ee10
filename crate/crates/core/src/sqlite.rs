//! Read-only, time-bounded SQLite query execution.

use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use thiserror::Error;

/// Progress handler granularity, in virtual machine instructions.
const PROGRESS_OPS: i32 = 1_000;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("query exceeded the {0:?} time limit")]
    Timeout(Duration),
    #[error("{0}")]
    Sql(String),
}

/// One cell of a result set.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl From<ValueRef<'_>> for Cell {
    fn from(value: ValueRef<'_>) -> Self {
        match value {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Integer(i),
            ValueRef::Real(f) => Cell::Real(f),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub column_count: usize,
    pub rows: Vec<Vec<Cell>>,
}

/// Opens `path` read-only with `query_only` enforced, so neither the main
/// database nor the temp schema can be written through this connection.
pub fn open_read_only(path: &Path) -> rusqlite::Result<Connection> {
    let conn = Connection::open_with_flags(
        path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
    )?;
    conn.pragma_update(None, "query_only", true)?;
    // Force the header read now so an invalid file fails at open time.
    conn.query_row("SELECT count(*) FROM sqlite_master", [], |_| Ok(()))?;
    Ok(conn)
}

/// Runs one statement to completion and collects every row.
///
/// The statement is interrupted once `timeout` elapses.
pub fn run_query(conn: &Connection, sql: &str, timeout: Duration) -> Result<ResultSet, QueryError> {
    let deadline = Instant::now() + timeout;
    conn.progress_handler(PROGRESS_OPS, Some(move || Instant::now() >= deadline));
    let result = collect_rows(conn, sql);
    conn.progress_handler(0, None::<fn() -> bool>);
    result.map_err(|e| match e {
        rusqlite::Error::SqliteFailure(code, _) if code.code == rusqlite::ErrorCode::OperationInterrupted => {
            QueryError::Timeout(timeout)
        }
        other => QueryError::Sql(other.to_string()),
    })
}

fn collect_rows(conn: &Connection, sql: &str) -> rusqlite::Result<ResultSet> {
    let mut stmt = conn.prepare(sql)?;
    let column_count = stmt.column_count();
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    while let Some(row) = rows.next()? {
        let mut cells = Vec::with_capacity(column_count);
        for idx in 0..column_count {
            cells.push(Cell::from(row.get_ref(idx)?));
        }
        out.push(cells);
    }
    Ok(ResultSet { column_count, rows: out })
}
