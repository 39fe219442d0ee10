//! The generate-and-verify loop.
//!
//! Generation 1 answers the initial actor prompt. Each later generation
//! answers a regeneration request appended to the same conversation. After
//! generations `1..z-1` the critic is consulted and an accepting verdict chain
//! ends the loop; generation `z` is emitted without a critic check.

mod batch;
mod trace;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::prompts::{build_actor_prompt, build_regeneration_prompt};
use crate::agents::{chain_accepts, Actor, Critic, CriticRequest, Verdict};
use crate::llm_client::ChatMessage;
use crate::spider_data::SpiderTask;
use crate::sql_text::extract_sql;

pub use crate::agents::CriticMode;
pub use batch::{completed_task_ids, run_batch, AgentFactory, AgentPair, BatchSummary};
pub use trace::{latest_by_task, read_traces, write_traces, LineWarning, TraceError, TraceLog, TraceWriter};

pub const DEFAULT_MAX_ITERATIONS: u32 = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("max_iterations must be >= 1")]
    ZeroBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcConfig {
    /// Total generations allowed, including the first.
    pub max_iterations: u32,
    pub critic_mode: CriticMode,
}

impl Default for AcConfig {
    fn default() -> Self {
        AcConfig { max_iterations: DEFAULT_MAX_ITERATIONS, critic_mode: CriticMode::Both }
    }
}

impl AcConfig {
    pub fn new(max_iterations: u32, critic_mode: CriticMode) -> Result<Self, ConfigError> {
        if max_iterations == 0 {
            return Err(ConfigError::ZeroBudget);
        }
        Ok(AcConfig { max_iterations, critic_mode })
    }

    /// Generations actually available: a run without critics stops after one.
    pub fn effective_budget(&self) -> u32 {
        match self.critic_mode {
            CriticMode::None => 1,
            _ => self.max_iterations,
        }
    }
}

/// A task together with what the agents need to work on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskContext {
    pub task: SpiderTask,
    pub schema_ddl: String,
    pub db_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub index: u32,
    #[serde(rename = "sql")]
    pub generated_sql: String,
    #[serde(rename = "actor_raw")]
    pub actor_raw_output: String,
    /// Empty for the unchecked final generation.
    pub verdicts: Vec<Verdict>,
}

impl IterationRecord {
    /// Whether the critic chain accepted this generation.
    pub fn accepted(&self) -> bool {
        chain_accepts(&self.verdicts)
    }

    pub fn was_checked(&self) -> bool {
        !self.verdicts.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Accepted,
    BudgetExhausted,
    /// The actor or the critic setup failed; `error` on the trace says why.
    Error,
}

/// Full record of one task's loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcTrace {
    #[serde(flatten)]
    pub task: SpiderTask,
    pub config: AcConfig,
    pub iterations: Vec<IterationRecord>,
    pub final_sql: String,
    pub stopped_by: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AcTrace {
    pub fn failed(task: &SpiderTask, config: &AcConfig, iterations: Vec<IterationRecord>, error: String) -> Self {
        let final_sql = iterations.last().map(|it| it.generated_sql.clone()).unwrap_or_default();
        AcTrace {
            task: task.clone(),
            config: *config,
            iterations,
            final_sql,
            stopped_by: StopReason::Error,
            error: Some(error),
        }
    }

    pub fn critic_consultations(&self) -> usize {
        self.iterations.iter().filter(|it| it.was_checked()).count()
    }
}

/// Runs the loop for one task. Agent failures end the run with
/// [`StopReason::Error`] rather than being mistaken for a rejection.
pub fn run_ac_loop(actor: &mut dyn Actor, critic: &mut dyn Critic, task: &TaskContext, config: &AcConfig) -> AcTrace {
    let spider = &task.task;
    if config.max_iterations == 0 {
        return AcTrace::failed(spider, config, Vec::new(), ConfigError::ZeroBudget.to_string());
    }
    let opening = match build_actor_prompt(&task.schema_ddl, &spider.question) {
        Ok(bundle) => bundle.render(),
        Err(e) => return AcTrace::failed(spider, config, Vec::new(), e.to_string()),
    };

    let budget = config.effective_budget();
    let mut conversation = vec![ChatMessage::user(opening)];
    let mut iterations: Vec<IterationRecord> = Vec::with_capacity(budget as usize);

    for index in 1..=budget {
        if index > 1 {
            match build_regeneration_prompt(&spider.question) {
                Ok(turn) => conversation.push(ChatMessage::user(turn)),
                Err(e) => return AcTrace::failed(spider, config, iterations, e.to_string()),
            }
        }
        let raw = match actor.generate(&conversation) {
            Ok(raw) => raw,
            Err(e) => return AcTrace::failed(spider, config, iterations, e.to_string()),
        };
        conversation.push(ChatMessage::assistant(raw.clone()));
        let sql = extract_sql(&raw);

        let verdicts = if index < budget {
            let request =
                CriticRequest { schema_ddl: &task.schema_ddl, question: &spider.question, candidate_sql: &sql };
            match critic.review(&request, config.critic_mode) {
                Ok(verdicts) if verdicts.is_empty() => {
                    return AcTrace::failed(spider, config, iterations, "critic returned no verdict".to_string())
                }
                Ok(verdicts) => verdicts,
                Err(e) => return AcTrace::failed(spider, config, iterations, e.to_string()),
            }
        } else {
            Vec::new()
        };

        let record = IterationRecord { index, generated_sql: sql, actor_raw_output: raw, verdicts };
        let accepted = record.accepted();
        iterations.push(record);
        if accepted {
            return finish(spider, config, iterations, StopReason::Accepted);
        }
    }
    finish(spider, config, iterations, StopReason::BudgetExhausted)
}

fn finish(task: &SpiderTask, config: &AcConfig, iterations: Vec<IterationRecord>, stopped_by: StopReason) -> AcTrace {
    let final_sql = iterations.last().map(|it| it.generated_sql.clone()).unwrap_or_default();
    AcTrace { task: task.clone(), config: *config, iterations, final_sql, stopped_by, error: None }
}
