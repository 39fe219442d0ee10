use std::cmp::Ordering;
use std::time::Duration;

use rusqlite::Connection;
use thiserror::Error;

use crate::sql_text::has_top_level_order_by;
use crate::sqlite::{run_query, Cell, ResultSet};

/// Relative tolerance for comparing floating-point cells.
pub const FLOAT_REL_TOL: f64 = 1e-6;

/// The reference query itself could not be evaluated, so the task cannot be
/// scored.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("gold SQL failed: {0}")]
pub struct GoldError(pub String);

/// Whether `predicted` returns the same result as `gold` on `conn`.
///
/// Rows are compared in order when `gold` has a top-level `ORDER BY` and as
/// multisets otherwise. Column counts must agree; columns are compared in the
/// order returned.
pub fn execution_accuracy(
    predicted: &str,
    gold: &str,
    conn: &Connection,
    timeout: Duration,
) -> Result<bool, GoldError> {
    let gold_rows = run_query(conn, gold, timeout).map_err(|e| GoldError(e.to_string()))?;
    let Ok(predicted_rows) = run_query(conn, predicted, timeout) else {
        return Ok(false);
    };
    Ok(results_match(&predicted_rows, &gold_rows, has_top_level_order_by(gold)))
}

fn as_f64(cell: &Cell) -> Option<f64> {
    match cell {
        Cell::Integer(i) => Some(*i as f64),
        Cell::Real(f) => Some(*f),
        _ => None,
    }
}

fn floats_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= FLOAT_REL_TOL * a.abs().max(b.abs())
}

fn cells_equal(a: &Cell, b: &Cell) -> bool {
    match (a, b) {
        (Cell::Null, Cell::Null) => true,
        (Cell::Integer(x), Cell::Integer(y)) => x == y,
        (Cell::Text(x), Cell::Text(y)) => x == y,
        (Cell::Blob(x), Cell::Blob(y)) => x == y,
        (Cell::Real(_), Cell::Real(_) | Cell::Integer(_)) | (Cell::Integer(_), Cell::Real(_)) => {
            floats_close(as_f64(a).unwrap_or(f64::NAN), as_f64(b).unwrap_or(f64::NAN))
        }
        _ => false,
    }
}

fn rows_equal(a: &[Cell], b: &[Cell]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| cells_equal(x, y))
}

fn rank(cell: &Cell) -> u8 {
    match cell {
        Cell::Null => 0,
        Cell::Integer(_) | Cell::Real(_) => 1,
        Cell::Text(_) => 2,
        Cell::Blob(_) => 3,
    }
}

fn cmp_cells(a: &Cell, b: &Cell) -> Ordering {
    match (a, b) {
        (Cell::Integer(x), Cell::Integer(y)) => x.cmp(y),
        (Cell::Text(x), Cell::Text(y)) => x.cmp(y),
        (Cell::Blob(x), Cell::Blob(y)) => x.cmp(y),
        _ if rank(a) == 1 && rank(b) == 1 => as_f64(a).unwrap_or(0.0).total_cmp(&as_f64(b).unwrap_or(0.0)),
        _ => rank(a).cmp(&rank(b)),
    }
}

fn cmp_rows(a: &[Cell], b: &[Cell]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| cmp_cells(x, y)).find(|o| o.is_ne()).unwrap_or(a.len().cmp(&b.len()))
}

/// Bag equality that tolerates float jitter reordering sorted rows.
fn multiset_match(predicted: &[Vec<Cell>], gold: &[Vec<Cell>]) -> bool {
    let mut left: Vec<&Vec<Cell>> = predicted.iter().collect();
    let mut right: Vec<&Vec<Cell>> = gold.iter().collect();
    left.sort_by(|a, b| cmp_rows(a, b));
    right.sort_by(|a, b| cmp_rows(a, b));
    if left.iter().zip(&right).all(|(a, b)| rows_equal(a, b)) {
        return true;
    }
    let has_reals = gold.iter().flatten().any(|c| matches!(c, Cell::Real(_)));
    if !has_reals {
        return false;
    }
    let mut used = vec![false; right.len()];
    left.iter().all(|row| match right.iter().enumerate().position(|(i, cand)| !used[i] && rows_equal(row, cand)) {
        Some(i) => {
            used[i] = true;
            true
        }
        None => false,
    })
}

pub fn results_match(predicted: &ResultSet, gold: &ResultSet, ordered: bool) -> bool {
    if predicted.column_count != gold.column_count || predicted.rows.len() != gold.rows.len() {
        return false;
    }
    if ordered {
        predicted.rows.iter().zip(&gold.rows).all(|(a, b)| rows_equal(a, b))
    } else {
        multiset_match(&predicted.rows, &gold.rows)
    }
}
