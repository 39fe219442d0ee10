use std::sync::Arc;

use log::warn;

use super::prompts::build_critic_prompt;
use super::{parse_verdict, Actor, AgentError, Critic, CriticMode, CriticRequest, Verdict, VerdictSource};
use crate::llm_client::{ChatBackend, ChatMessage};

/// Prefix of the verdict detail recorded when the critic endpoint is unreachable.
pub const TRANSPORT_ERROR_PREFIX: &str = "critic transport error: ";

/// Actor that forwards the running conversation to a chat model.
pub struct LlmActor {
    backend: Arc<dyn ChatBackend>,
}

impl LlmActor {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        LlmActor { backend }
    }
}

impl Actor for LlmActor {
    fn generate(&mut self, conversation: &[ChatMessage]) -> Result<String, AgentError> {
        self.backend.complete(conversation).map_err(AgentError::Actor)
    }
}

/// Asks a chat model whether the candidate is correct.
///
/// An unreachable endpoint yields a rejecting verdict so the loop regenerates
/// instead of emitting an unchecked candidate early.
pub struct LlmCritic {
    backend: Arc<dyn ChatBackend>,
}

impl LlmCritic {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        LlmCritic { backend }
    }

    pub fn check(&self, request: &CriticRequest<'_>) -> Result<Verdict, AgentError> {
        let prompt = build_critic_prompt(request.schema_ddl, request.question, request.candidate_sql)?;
        let messages = [ChatMessage::user(prompt.render())];
        Ok(match self.backend.complete(&messages) {
            Ok(reply) => Verdict::new(VerdictSource::Llm, parse_verdict(&reply), reply),
            Err(err) => {
                warn!("LLM critic unavailable, rejecting candidate: {err}");
                Verdict::new(VerdictSource::Llm, false, format!("{TRANSPORT_ERROR_PREFIX}{err}"))
            }
        })
    }
}

impl Critic for LlmCritic {
    fn review(&mut self, request: &CriticRequest<'_>, _mode: CriticMode) -> Result<Vec<Verdict>, AgentError> {
        Ok(vec![self.check(request)?])
    }
}
