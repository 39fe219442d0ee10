use super::{AgentError, Critic, CriticMode, CriticRequest, ExecutionCritic, LlmCritic, Verdict};

/// Execution and LLM critics combined according to a [`CriticMode`].
///
/// In [`CriticMode::Both`] the execution critic runs first and a rejection
/// short-circuits, so the LLM only sees candidates that execute.
#[derive(Default)]
pub struct CompositeCritic {
    execution: Option<ExecutionCritic>,
    llm: Option<LlmCritic>,
}

impl CompositeCritic {
    pub fn new(execution: Option<ExecutionCritic>, llm: Option<LlmCritic>) -> Self {
        CompositeCritic { execution, llm }
    }

    fn execution(&self, mode: CriticMode) -> Result<&ExecutionCritic, AgentError> {
        self.execution.as_ref().ok_or(AgentError::MissingCritic { mode, missing: "execution" })
    }

    fn llm(&self, mode: CriticMode) -> Result<&LlmCritic, AgentError> {
        self.llm.as_ref().ok_or(AgentError::MissingCritic { mode, missing: "LLM" })
    }
}

impl Critic for CompositeCritic {
    fn review(&mut self, request: &CriticRequest<'_>, mode: CriticMode) -> Result<Vec<Verdict>, AgentError> {
        match mode {
            CriticMode::None => Ok(Vec::new()),
            CriticMode::ExecutionOnly => Ok(vec![self.execution(mode)?.check(request.candidate_sql)]),
            CriticMode::LlmOnly => Ok(vec![self.llm(mode)?.check(request)?]),
            CriticMode::Both => {
                let llm = self.llm(mode)?;
                let executed = self.execution(mode)?.check(request.candidate_sql);
                if !executed.accepted {
                    return Ok(vec![executed]);
                }
                Ok(vec![executed, llm.check(request)?])
            }
        }
    }
}
