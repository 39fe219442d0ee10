use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ex::execution_accuracy;
use crate::engine::{AcTrace, IterationRecord};
use crate::spider_data::Dataset;
use crate::sqlite::open_read_only;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqsCounts {
    pub first_pass_correct: u64,
    pub first_pass_total: u64,
    pub wrong_checked: u64,
    pub wrong_accepted: u64,
    pub correct_checked: u64,
    pub correct_rejected: u64,
}

/// Empirical actor accuracy and critic error rates. A rate with a zero
/// denominator is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqsEstimate {
    pub p_hat: Option<f64>,
    pub q_hat: Option<f64>,
    pub s_hat: Option<f64>,
    pub counts: PqsCounts,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl From<PqsCounts> for PqsEstimate {
    fn from(counts: PqsCounts) -> Self {
        PqsEstimate {
            p_hat: ratio(counts.first_pass_correct, counts.first_pass_total),
            q_hat: ratio(counts.wrong_accepted, counts.wrong_checked),
            s_hat: ratio(counts.correct_rejected, counts.correct_checked),
            counts,
        }
    }
}

/// Counts first-pass correctness and every critic-checked generation.
///
/// `is_correct` scores one generation; `None` leaves it out. `q` and `s` pool
/// all checked iterations and use the overall verdict of the chain.
pub fn estimate_pqs_with<F>(traces: &[AcTrace], mut is_correct: F) -> PqsEstimate
where
    F: FnMut(&AcTrace, &IterationRecord) -> Option<bool>,
{
    let mut counts = PqsCounts::default();
    for trace in traces {
        for (pos, iteration) in trace.iterations.iter().enumerate() {
            let Some(correct) = is_correct(trace, iteration) else { continue };
            if pos == 0 {
                counts.first_pass_total += 1;
                counts.first_pass_correct += u64::from(correct);
            }
            if !iteration.was_checked() {
                continue;
            }
            let accepted = iteration.accepted();
            if correct {
                counts.correct_checked += 1;
                counts.correct_rejected += u64::from(!accepted);
            } else {
                counts.wrong_checked += 1;
                counts.wrong_accepted += u64::from(accepted);
            }
        }
    }
    counts.into()
}

/// [`estimate_pqs_with`] scoring each generation by execution accuracy against
/// the task's gold SQL.
pub fn estimate_pqs(traces: &[AcTrace], dataset: &Dataset, timeout: Duration) -> PqsEstimate {
    let gold: HashMap<&str, &str> =
        dataset.tasks.iter().filter_map(|t| t.gold_sql.as_deref().map(|g| (t.task_id.as_str(), g))).collect();
    let mut cache: HashMap<(String, String), Option<bool>> = HashMap::new();
    estimate_pqs_with(traces, |trace, iteration| {
        let key = (trace.task.task_id.clone(), iteration.generated_sql.clone());
        *cache.entry(key).or_insert_with(|| {
            let gold_sql = gold.get(trace.task.task_id.as_str()).copied().or(trace.task.gold_sql.as_deref())?;
            let conn = open_read_only(&dataset.db_path(&trace.task.db_id)).ok()?;
            execution_accuracy(&iteration.generated_sql, gold_sql, &conn, timeout).ok()
        })
    })
}
