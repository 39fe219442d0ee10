use std::sync::Arc;
use std::time::Duration;

use super::{AgentError, CompositeCritic, CriticMode, ExecutionCritic, LlmActor, LlmCritic};
use crate::engine::{AgentFactory, AgentPair, TaskContext};
use crate::llm_client::ChatBackend;

/// Chat-model actor plus the critics a mode asks for. The critic endpoint may
/// be the same backend as the actor's.
pub struct LlmAgentFactory {
    pub actor: Arc<dyn ChatBackend>,
    pub critic: Option<Arc<dyn ChatBackend>>,
    pub execution_timeout: Duration,
}

impl AgentFactory for LlmAgentFactory {
    fn build(&self, task: &TaskContext, mode: CriticMode) -> Result<AgentPair, AgentError> {
        let execution = if mode.uses_execution() {
            Some(ExecutionCritic::open(&task.db_path, self.execution_timeout)?)
        } else {
            None
        };
        let llm = if mode.uses_llm() {
            let backend = self.critic.clone().ok_or(AgentError::MissingCritic { mode, missing: "LLM" })?;
            Some(LlmCritic::new(backend))
        } else {
            None
        };
        Ok((Box::new(LlmActor::new(self.actor.clone())), Box::new(CompositeCritic::new(execution, llm))))
    }
}
