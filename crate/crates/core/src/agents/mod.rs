//! Actors propose SQL, critics judge it.
//!
//! The engine talks to both through the [`Actor`] and [`Critic`] traits. LLM
//! backed agents, the execution critic and their composition live here, along
//! with scripted and stochastic doubles for tests and simulation.

mod composite;
mod doubles;
mod execution;
mod factory;
mod llm;
pub mod prompts;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_client::{ChatMessage, LlmError};

pub use composite::CompositeCritic;
pub use doubles::{BernoulliActor, ScriptedActor, ScriptedCritic, StochasticCritic, CORRECT_SQL, WRONG_SQL};
pub use execution::ExecutionCritic;
pub use factory::LlmAgentFactory;
pub use llm::{LlmActor, LlmCritic, TRANSPORT_ERROR_PREFIX};
pub use prompts::{build_actor_prompt, build_critic_prompt, build_regeneration_prompt, PromptBundle};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("actor failed: {0}")]
    Actor(#[source] LlmError),
    #[error("cannot open database {path}: {reason}")]
    Database { path: String, reason: String },
    #[error("critic mode {mode} needs a {missing} critic")]
    MissingCritic { mode: CriticMode, missing: &'static str },
    #[error("script exhausted: {0}")]
    ScriptExhausted(&'static str),
}

/// Which critics take part in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// Bare actor, one generation.
    None,
    LlmOnly,
    ExecutionOnly,
    /// Execution critic first, LLM critic only if execution succeeds.
    #[default]
    Both,
}

impl CriticMode {
    pub const ALL: [CriticMode; 4] =
        [CriticMode::None, CriticMode::LlmOnly, CriticMode::ExecutionOnly, CriticMode::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            CriticMode::None => "none",
            CriticMode::LlmOnly => "llm_only",
            CriticMode::ExecutionOnly => "execution_only",
            CriticMode::Both => "both",
        }
    }

    pub fn uses_execution(self) -> bool {
        matches!(self, CriticMode::ExecutionOnly | CriticMode::Both)
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, CriticMode::LlmOnly | CriticMode::Both)
    }
}

impl fmt::Display for CriticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriticMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CriticMode::ALL
            .into_iter()
            .find(|mode| mode.as_str() == s)
            .ok_or_else(|| format!("unknown critic mode `{s}` (expected none, llm_only, execution_only or both)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Execution,
    Llm,
    Scripted,
    Stochastic,
}

/// One critic decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub source: VerdictSource,
    pub accepted: bool,
    /// Raw LLM reply, database error text, or empty.
    pub detail: String,
}

impl Verdict {
    pub fn new(source: VerdictSource, accepted: bool, detail: impl Into<String>) -> Self {
        Verdict { source, accepted, detail: detail.into() }
    }
}

/// Overall decision of a verdict chain: accept only if every verdict accepts.
pub fn chain_accepts(verdicts: &[Verdict]) -> bool {
    !verdicts.is_empty() && verdicts.iter().all(|v| v.accepted)
}

/// Reads a True/False answer. Replies that mention both or neither are
/// treated as a rejection.
pub fn parse_verdict(reply: &str) -> bool {
    let lower = reply.to_lowercase();
    lower.contains("true") && !lower.contains("false")
}

/// Everything a critic sees about one candidate.
#[derive(Debug, Clone, Copy)]
pub struct CriticRequest<'a> {
    pub schema_ddl: &'a str,
    pub question: &'a str,
    pub candidate_sql: &'a str,
}

pub trait Actor: Send {
    /// Produces a raw reply for the conversation so far. The last message is
    /// the user turn to answer.
    fn generate(&mut self, conversation: &[ChatMessage]) -> Result<String, AgentError>;
}

pub trait Critic: Send {
    /// Judges a candidate, returning the ordered verdicts that were taken.
    fn review(&mut self, request: &CriticRequest<'_>, mode: CriticMode) -> Result<Vec<Verdict>, AgentError>;
}

impl<T: Actor + ?Sized> Actor for Box<T> {
    fn generate(&mut self, conversation: &[ChatMessage]) -> Result<String, AgentError> {
        (**self).generate(conversation)
    }
}

impl<T: Critic + ?Sized> Critic for Box<T> {
    fn review(&mut self, request: &CriticRequest<'_>, mode: CriticMode) -> Result<Vec<Verdict>, AgentError> {
        (**self).review(request, mode)
    }
}
