//! Prompt text for the actor and the LLM critic.

use super::AgentError;

pub const ACTOR_INSTRUCTION: &str =
    "Create a SQL query only for the given questions using database schema above without explanation";
pub const REGENERATION_INSTRUCTION: &str = "Please provide a new SQL query to the question only without explanation";
pub const CRITIC_INSTRUCTION: &str =
    "Answer True if the SQL query is correct and False if incorrect without explanation.";

/// Schema block followed by the instruction turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub preamble: String,
    pub user_turn: String,
}

impl PromptBundle {
    /// Single message text: schema, blank line, instruction.
    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.preamble, self.user_turn)
    }
}

fn non_empty<'a>(what: &'static str, text: &'a str) -> Result<&'a str, AgentError> {
    if text.trim().is_empty() {
        Err(AgentError::EmptyInput(what))
    } else {
        Ok(text)
    }
}

pub fn build_actor_prompt(schema_ddl: &str, question: &str) -> Result<PromptBundle, AgentError> {
    let schema_ddl = non_empty("schema", schema_ddl)?;
    let question = non_empty("question", question)?;
    Ok(PromptBundle { preamble: schema_ddl.to_string(), user_turn: format!("{ACTOR_INSTRUCTION}: {question}") })
}

pub fn build_regeneration_prompt(question: &str) -> Result<String, AgentError> {
    let question = non_empty("question", question)?;
    Ok(format!("{REGENERATION_INSTRUCTION}: {question}"))
}

pub fn build_critic_prompt(schema_ddl: &str, question: &str, candidate_sql: &str) -> Result<PromptBundle, AgentError> {
    let schema_ddl = non_empty("schema", schema_ddl)?;
    let question = non_empty("question", question)?;
    let candidate_sql = non_empty("SQL", candidate_sql)?;
    Ok(PromptBundle {
        preamble: schema_ddl.to_string(),
        user_turn: format!("{CRITIC_INSTRUCTION} Question: {question} SQL: {candidate_sql}"),
    })
}
