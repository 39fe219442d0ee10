//! Test doubles: scripted agents replaying fixed replies, and stochastic
//! agents with known accuracy and error rates.

use super::prompts::build_critic_prompt;
use super::{parse_verdict, Actor, AgentError, Critic, CriticMode, CriticRequest, Verdict, VerdictSource};
use crate::llm_client::ChatMessage;
use crate::rng::{uniform, StreamRng};

/// Candidate emitted by [`BernoulliActor`] when it draws a correct SQL.
pub const CORRECT_SQL: &str = "SELECT 1 AS correct";
/// Candidate emitted by [`BernoulliActor`] when it draws a wrong SQL.
pub const WRONG_SQL: &str = "SELECT 0 AS wrong";

/// Emits [`CORRECT_SQL`] with probability `p`, else [`WRONG_SQL`].
pub struct BernoulliActor {
    p: f64,
    rng: StreamRng,
}

impl BernoulliActor {
    pub fn new(p: f64, rng: StreamRng) -> Self {
        BernoulliActor { p, rng }
    }
}

impl Actor for BernoulliActor {
    fn generate(&mut self, _conversation: &[ChatMessage]) -> Result<String, AgentError> {
        Ok(if uniform(&mut self.rng) < self.p { CORRECT_SQL } else { WRONG_SQL }.to_string())
    }
}

/// Accepts a wrong candidate with probability `q` and rejects a correct one
/// with probability `s`. Correctness is read from the [`BernoulliActor`] tag.
pub struct StochasticCritic {
    q: f64,
    s: f64,
    rng: StreamRng,
}

impl StochasticCritic {
    pub fn new(q: f64, s: f64, rng: StreamRng) -> Self {
        StochasticCritic { q, s, rng }
    }

    pub fn judge(&mut self, candidate_sql: &str) -> bool {
        let draw = uniform(&mut self.rng);
        if candidate_sql == CORRECT_SQL {
            draw >= self.s
        } else {
            draw < self.q
        }
    }
}

impl Critic for StochasticCritic {
    fn review(&mut self, request: &CriticRequest<'_>, _mode: CriticMode) -> Result<Vec<Verdict>, AgentError> {
        let accepted = self.judge(request.candidate_sql);
        Ok(vec![Verdict::new(VerdictSource::Stochastic, accepted, "")])
    }
}

/// Replays fixed replies in order, repeating the last one once the script
/// runs out. Every conversation it is shown is kept for inspection.
#[derive(Debug, Clone, Default)]
pub struct ScriptedActor {
    replies: Vec<String>,
    next: usize,
    conversations: Vec<Vec<ChatMessage>>,
}

impl ScriptedActor {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedActor { replies: replies.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn conversations(&self) -> &[Vec<ChatMessage>] {
        &self.conversations
    }
}

impl Actor for ScriptedActor {
    fn generate(&mut self, conversation: &[ChatMessage]) -> Result<String, AgentError> {
        self.conversations.push(conversation.to_vec());
        let reply = self
            .replies
            .get(self.next)
            .or_else(|| self.replies.last())
            .ok_or(AgentError::ScriptExhausted("actor has no replies"))?
            .clone();
        self.next += 1;
        Ok(reply)
    }
}

/// Replays fixed True/False style replies. Records the critic prompt that an
/// LLM critic would have been sent for each candidate.
#[derive(Debug, Clone, Default)]
pub struct ScriptedCritic {
    replies: Vec<String>,
    next: usize,
    prompts: Vec<String>,
}

impl ScriptedCritic {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedCritic { replies: replies.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }
}

impl Critic for ScriptedCritic {
    fn review(&mut self, request: &CriticRequest<'_>, _mode: CriticMode) -> Result<Vec<Verdict>, AgentError> {
        let prompt = build_critic_prompt(request.schema_ddl, request.question, request.candidate_sql)?;
        self.prompts.push(prompt.render());
        let reply = self
            .replies
            .get(self.next)
            .or_else(|| self.replies.last())
            .ok_or(AgentError::ScriptExhausted("critic has no replies"))?
            .clone();
        self.next += 1;
        Ok(vec![Verdict::new(VerdictSource::Scripted, parse_verdict(&reply), reply)])
    }
}
