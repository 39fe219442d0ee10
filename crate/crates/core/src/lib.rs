//! Actor-critic text-to-SQL toolkit.
//!
//! An actor LLM proposes SQL, a critic (database execution, an LLM judge, or
//! both) accepts or rejects it, and rejected candidates are regenerated up to a
//! fixed budget. Alongside the loop itself the crate provides the closed-form
//! performance model of that loop, a Monte-Carlo simulator that checks it, and
//! an execution-accuracy harness for Spider-format benchmarks.

pub mod agents;
pub mod engine;
pub mod evalkit;
pub mod llm_client;
pub mod mc_sim;
pub mod rng;
pub mod spider_data;
pub mod sql_text;
pub mod sqlite;
pub mod theory;

pub use agents::{Actor, Critic, CriticMode, Verdict, VerdictSource};
pub use engine::{run_ac_loop, AcConfig, AcTrace, StopReason};
pub use theory::{AcParams, GainRegion};
