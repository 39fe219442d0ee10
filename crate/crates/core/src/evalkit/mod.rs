//! Execution-accuracy scoring, run reports, ablations and `(p, q, s)`
//! estimation from traces.

mod ablation;
mod ex;
mod pqs;
mod report;

use thiserror::Error;

use crate::engine::TraceError;
use crate::spider_data::DataError;

pub use ablation::{mode_label, render_ablation_table, run_ablation};
pub use ex::{execution_accuracy, results_match, GoldError, FLOAT_REL_TOL};
pub use pqs::{estimate_pqs, estimate_pqs_with, PqsCounts, PqsEstimate};
pub use report::{
    evaluate_run, evaluate_with, improvement, render_report_table, EvalOptions, EvalReport, ExcludedTask, Score,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("cannot create {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
