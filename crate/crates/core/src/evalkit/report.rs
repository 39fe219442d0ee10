use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ex::execution_accuracy;
use crate::agents::CriticMode;
use crate::engine::AcTrace;
use crate::spider_data::Dataset;
use crate::sqlite::open_read_only;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub timeout: Duration,
    pub baseline_ex: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { timeout: Duration::from_secs(30), baseline_ex: None }
    }
}

/// Outcome of scoring one trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Score {
    Correct,
    Incorrect,
    /// Not scorable, e.g. the gold SQL fails; left out of the denominator.
    Excluded(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedTask {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_name: String,
    /// `None` when the traces mix critic modes.
    pub mode: Option<CriticMode>,
    pub n_tasks: usize,
    pub n_correct: usize,
    pub ex: f64,
    pub error_rate: f64,
    pub baseline_ex: Option<f64>,
    pub abs_improvement: Option<f64>,
    /// Undefined when the baseline is already perfect.
    pub rel_error_reduction: Option<f64>,
    pub excluded: Vec<ExcludedTask>,
    /// Dataset tasks with no trace.
    pub missing: usize,
}

/// `(ex - baseline, (ex - baseline) / (1 - baseline))`; the ratio is `None`
/// when `baseline == 1`.
pub fn improvement(ex: f64, baseline: f64) -> (f64, Option<f64>) {
    let abs = ex - baseline;
    let rel = if baseline < 1.0 { Some(abs / (1.0 - baseline)) } else { None };
    (abs, rel)
}

impl EvalReport {
    pub fn with_baseline(mut self, baseline_ex: Option<f64>) -> Self {
        self.baseline_ex = baseline_ex;
        match baseline_ex {
            Some(baseline) => {
                let (abs, rel) = improvement(self.ex, baseline);
                self.abs_improvement = Some(abs);
                self.rel_error_reduction = rel;
            }
            None => {
                self.abs_improvement = None;
                self.rel_error_reduction = None;
            }
        }
        self
    }
}

fn common_mode(traces: &[AcTrace]) -> Option<CriticMode> {
    let first = traces.first()?.config.critic_mode;
    traces.iter().all(|t| t.config.critic_mode == first).then_some(first)
}

/// Folds per-trace scores into a report. Order of `traces` does not matter.
pub fn evaluate_with<F>(dataset_name: &str, traces: &[AcTrace], score: F) -> EvalReport
where
    F: Fn(&AcTrace) -> Score + Sync,
{
    let scores: Vec<Score> = traces.par_iter().map(&score).collect();
    let mut n_correct = 0;
    let mut n_tasks = 0;
    let mut excluded = Vec::new();
    for (trace, score) in traces.iter().zip(scores) {
        match score {
            Score::Correct => {
                n_correct += 1;
                n_tasks += 1;
            }
            Score::Incorrect => n_tasks += 1,
            Score::Excluded(reason) => excluded.push(ExcludedTask { task_id: trace.task.task_id.clone(), reason }),
        }
    }
    let ex = if n_tasks == 0 { 0.0 } else { n_correct as f64 / n_tasks as f64 };
    EvalReport {
        dataset_name: dataset_name.to_string(),
        mode: common_mode(traces),
        n_tasks,
        n_correct,
        ex,
        error_rate: 1.0 - ex,
        baseline_ex: None,
        abs_improvement: None,
        rel_error_reduction: None,
        excluded,
        missing: 0,
    }
}

/// Scores each trace's `final_sql` against the dataset's gold SQL by
/// execution. Each scoring call opens its own read-only connection.
pub fn evaluate_run(traces: &[AcTrace], dataset: &Dataset, options: &EvalOptions) -> EvalReport {
    let gold: HashMap<&str, &str> =
        dataset.tasks.iter().filter_map(|t| t.gold_sql.as_deref().map(|g| (t.task_id.as_str(), g))).collect();
    let scorer = |trace: &AcTrace| -> Score {
        let Some(gold_sql) = gold.get(trace.task.task_id.as_str()).copied().or(trace.task.gold_sql.as_deref()) else {
            return Score::Excluded("no gold SQL".to_string());
        };
        let conn = match open_read_only(&dataset.db_path(&trace.task.db_id)) {
            Ok(conn) => conn,
            Err(e) => return Score::Excluded(format!("cannot open database: {e}")),
        };
        match execution_accuracy(&trace.final_sql, gold_sql, &conn, options.timeout) {
            Ok(true) => Score::Correct,
            Ok(false) => Score::Incorrect,
            Err(e) => Score::Excluded(e.to_string()),
        }
    };
    let mut report = evaluate_with(&dataset.name, traces, scorer).with_baseline(options.baseline_ex);
    let seen: HashSet<&str> = traces.iter().map(|t| t.task.task_id.as_str()).collect();
    report.missing = dataset.tasks.iter().filter(|t| !seen.contains(t.task_id.as_str())).count();
    report
}

fn pct(value: Option<f64>) -> String {
    value.map(|v| format!("{:.1}", 100.0 * v)).unwrap_or_else(|| "-".to_string())
}

/// Plain-text table with one row per report.
pub fn render_report_table(reports: &[EvalReport]) -> String {
    let header = ["Dataset", "Mode", "N", "EX (%)", "Abs. (%)", "Rel. (%)"];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            [
                r.dataset_name.clone(),
                r.mode.map_or("mixed".to_string(), |m| m.to_string()),
                r.n_tasks.to_string(),
                pct(Some(r.ex)),
                pct(r.abs_improvement),
                pct(r.rel_error_reduction),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  "));
    };
    line(&mut out, &header);
    for row in &rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
