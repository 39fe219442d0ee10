//! Resumable multi-task runs.

use std::collections::HashSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;

use super::trace::{read_traces, TraceError, TraceWriter};
use super::{run_ac_loop, AcConfig, AcTrace, StopReason, TaskContext};
use crate::agents::{Actor, AgentError, Critic, CriticMode};

pub type AgentPair = (Box<dyn Actor>, Box<dyn Critic>);

/// Builds fresh agents for each task. Database connections and conversation
/// state are never shared between tasks.
pub trait AgentFactory: Sync {
    fn build(&self, task: &TaskContext, mode: CriticMode) -> Result<AgentPair, AgentError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchSummary {
    /// Tasks already finished in an earlier run.
    pub skipped: usize,
    pub accepted: usize,
    pub budget_exhausted: usize,
    pub failed: usize,
}

impl BatchSummary {
    pub fn ran(&self) -> usize {
        self.accepted + self.budget_exhausted + self.failed
    }

    fn count(&mut self, reason: StopReason) {
        match reason {
            StopReason::Accepted => self.accepted += 1,
            StopReason::BudgetExhausted => self.budget_exhausted += 1,
            StopReason::Error => self.failed += 1,
        }
    }
}

/// Task ids that already have a non-error trace in `path`.
pub fn completed_task_ids(path: &Path) -> Result<HashSet<String>, TraceError> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    let log = read_traces(path, false)?;
    Ok(log.traces.into_iter().filter(|t| t.stopped_by != StopReason::Error).map(|t| t.task.task_id).collect())
}

/// Runs every task that has no finished trace in `trace_path`, appending one
/// trace line per task. At most `concurrency` loops run at once.
pub fn run_batch(
    tasks: &[TaskContext],
    factory: &dyn AgentFactory,
    config: &AcConfig,
    trace_path: &Path,
    concurrency: usize,
) -> Result<BatchSummary, TraceError> {
    let done = completed_task_ids(trace_path)?;
    let pending: Vec<&TaskContext> = tasks.iter().filter(|t| !done.contains(&t.task.task_id)).collect();
    let skipped = tasks.len() - pending.len();
    if skipped > 0 {
        info!("resuming: {skipped} task(s) already in {}", trace_path.display());
    }

    let writer = TraceWriter::append(trace_path)?;
    let next = AtomicUsize::new(0);
    let summary = Mutex::new(BatchSummary { skipped, ..Default::default() });
    let first_error: Mutex<Option<TraceError>> = Mutex::new(None);

    let worker = || loop {
        let idx = next.fetch_add(1, Ordering::Relaxed);
        let Some(task) = pending.get(idx) else { break };
        let trace = match factory.build(task, config.critic_mode) {
            Ok((mut actor, mut critic)) => run_ac_loop(actor.as_mut(), critic.as_mut(), task, config),
            Err(e) => AcTrace::failed(&task.task, config, Vec::new(), e.to_string()),
        };
        if let Err(e) = writer.write(&trace) {
            first_error.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
            next.store(pending.len(), Ordering::Relaxed);
            break;
        }
        summary.lock().unwrap_or_else(|e| e.into_inner()).count(trace.stopped_by);
    };

    let workers = concurrency.clamp(1, pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(worker);
        }
    });

    if let Some(e) = first_error.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e);
    }
    Ok(summary.into_inner().unwrap_or_else(|e| e.into_inner()))
}
