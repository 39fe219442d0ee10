use std::fmt::Write as _;
use std::path::Path;

use super::report::{evaluate_run, EvalOptions, EvalReport};
use super::EvalError;
use crate::agents::CriticMode;
use crate::engine::{latest_by_task, read_traces, run_batch, AcConfig, AgentFactory};
use crate::spider_data::Dataset;

/// Column label used in ablation tables.
pub fn mode_label(mode: CriticMode) -> &'static str {
    match mode {
        CriticMode::None => "AC(-)",
        CriticMode::LlmOnly => "AC-LLM",
        CriticMode::ExecutionOnly => "AC-Ex",
        CriticMode::Both => "AC(+)",
    }
}

/// Runs the loop once per mode over the same tasks, each into its own trace
/// file `traces_<mode>.jsonl` under `out_dir`, and scores every run. Reports
/// follow the order of `modes`. When `none` is among them its accuracy is
/// the baseline for all reports.
pub fn run_ablation(
    dataset: &Dataset,
    modes: &[CriticMode],
    factory: &dyn AgentFactory,
    max_iterations: u32,
    out_dir: &Path,
    concurrency: usize,
    options: &EvalOptions,
) -> Result<Vec<EvalReport>, EvalError> {
    std::fs::create_dir_all(out_dir).map_err(|source| EvalError::Io { path: out_dir.to_path_buf(), source })?;
    let contexts = dataset.contexts()?;
    let mut reports = Vec::with_capacity(modes.len());
    for &mode in modes {
        let config = AcConfig { max_iterations, critic_mode: mode };
        let path = out_dir.join(format!("traces_{mode}.jsonl"));
        run_batch(&contexts, factory, &config, &path, concurrency)?;
        let traces = latest_by_task(read_traces(&path, false)?.traces);
        let mut report = evaluate_run(&traces, dataset, options);
        report.mode = Some(mode);
        reports.push(report);
    }
    let baseline =
        options.baseline_ex.or_else(|| reports.iter().find(|r| r.mode == Some(CriticMode::None)).map(|r| r.ex));
    Ok(reports.into_iter().map(|r| r.with_baseline(baseline)).collect())
}

/// Modes as columns, metrics as rows.
pub fn render_ablation_table(reports: &[EvalReport]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{:.1}", 100.0 * x)).unwrap_or_else(|| "-".to_string());
    let mut header = vec!["Metric".to_string()];
    header.extend(reports.iter().map(|r| r.mode.map_or("mixed", mode_label).to_string()));
    let rows = [
        ("EX (%)", reports.iter().map(|r| fmt(Some(r.ex))).collect::<Vec<_>>()),
        ("Abs. (%)", reports.iter().map(|r| fmt(r.abs_improvement)).collect()),
        ("Rel. (%)", reports.iter().map(|r| fmt(r.rel_error_reduction)).collect()),
    ];
    let mut table: Vec<Vec<String>> = vec![header];
    for (name, cells) in rows {
        let mut row = vec![name.to_string()];
        row.extend(cells);
        table.push(row);
    }
    let widths: Vec<usize> =
        (0..table[0].len()).map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  "));
    }
    out
}
