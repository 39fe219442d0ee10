//! Monte-Carlo simulation of the actor-critic loop.
//!
//! Each trial walks generations `1..=z`: a uniform draw below `p` marks the
//! candidate correct; for `i < z` a second draw decides the verdict (a correct
//! candidate is rejected when the draw is below `s`, a wrong one accepted when
//! below `q`) and an acceptance ends the trial. Generation `z` is emitted
//! without a verdict. Draws always come in that order.
//!
//! Repeat `r` draws from ChaCha8 stream `r` of the configured seed (see
//! [`crate::rng`]), so repeats can run in parallel while the report stays
//! bit-identical. Per-repeat estimates are averaged in repeat order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{BernoulliActor, CriticMode, StochasticCritic, CORRECT_SQL};
use crate::engine::{run_ac_loop, AcConfig, TaskContext};
use crate::rng::{stream_rng, uniform, StreamRng};
use crate::spider_data::SpiderTask;
use crate::theory::{expected_prob, AcParams, TheoryError};

pub const DEFAULT_TRIALS: u64 = 1_000_000;
pub const DEFAULT_REPEATS: u32 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] TheoryError),
    #[error("trials must be >= 1")]
    NoTrials,
    #[error("repeats must be >= 1")]
    NoRepeats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub params: AcParams,
    pub trials: u64,
    pub repeats: u32,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(params: AcParams, seed: u64) -> Self {
        SimulationConfig { params, trials: DEFAULT_TRIALS, repeats: DEFAULT_REPEATS, seed }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(SimError::NoTrials);
        }
        if self.repeats == 0 {
            return Err(SimError::NoRepeats);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub params: AcParams,
    pub trials: u64,
    pub repeats: u32,
    pub seed: u64,
    pub estimated_accuracy: f64,
    pub theory_prob: f64,
    pub abs_difference: f64,
    #[serde(skip_serializing, default)]
    pub per_repeat_estimates: Vec<f64>,
}

impl SimulationReport {
    fn assemble(config: &SimulationConfig, per_repeat_estimates: Vec<f64>) -> Result<Self, SimError> {
        let theory_prob = expected_prob(&config.params)?;
        let estimated_accuracy = per_repeat_estimates.iter().sum::<f64>() / per_repeat_estimates.len() as f64;
        Ok(SimulationReport {
            params: config.params,
            trials: config.trials,
            repeats: config.repeats,
            seed: config.seed,
            estimated_accuracy,
            theory_prob,
            abs_difference: (estimated_accuracy - theory_prob).abs(),
            per_repeat_estimates,
        })
    }

    /// Sample standard deviation of the per-repeat estimates.
    pub fn repeat_std_dev(&self) -> f64 {
        let n = self.per_repeat_estimates.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.per_repeat_estimates.iter().sum::<f64>() / n as f64;
        let ss: f64 = self.per_repeat_estimates.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Outcome of one simulated task: whether the emitted SQL is correct.
fn simulate_trial(params: &AcParams, rng: &mut StreamRng) -> bool {
    for i in 1..=params.z {
        let correct = uniform(rng) < params.p;
        if i == params.z {
            return correct;
        }
        let draw = uniform(rng);
        let accepted = if correct { draw >= params.s } else { draw < params.q };
        if accepted {
            return correct;
        }
    }
    unreachable!("z >= 1 always returns inside the loop")
}

fn simulate_repeat(config: &SimulationConfig, repeat: u32) -> f64 {
    let mut rng = stream_rng(config.seed, u64::from(repeat));
    let correct = (0..config.trials).filter(|_| simulate_trial(&config.params, &mut rng)).count();
    correct as f64 / config.trials as f64
}

pub fn simulate(config: &SimulationConfig) -> Result<SimulationReport, SimError> {
    config.validate()?;
    let estimates: Vec<f64> = (0..config.repeats).into_par_iter().map(|r| simulate_repeat(config, r)).collect();
    SimulationReport::assemble(config, estimates)
}

/// Same experiment, but every trial is a full [`run_ac_loop`] with a
/// [`BernoulliActor`] and a [`StochasticCritic`]. Repeat `r` gives the actor
/// stream `2r` and the critic stream `2r + 1`.
pub fn simulate_via_engine(config: &SimulationConfig) -> Result<SimulationReport, SimError> {
    config.validate()?;
    let estimates: Vec<f64> = (0..config.repeats).into_par_iter().map(|r| engine_repeat(config, r)).collect();
    SimulationReport::assemble(config, estimates)
}

fn bridge_task() -> TaskContext {
    TaskContext {
        task: SpiderTask {
            task_id: "simulated".to_string(),
            db_id: "simulated".to_string(),
            question: "Is the emitted SQL correct?".to_string(),
            gold_sql: Some(CORRECT_SQL.to_string()),
        },
        schema_ddl: "CREATE TABLE simulated ( correct INT );".to_string(),
        db_path: Default::default(),
    }
}

fn engine_repeat(config: &SimulationConfig, repeat: u32) -> f64 {
    let AcParams { p, q, s, z } = config.params;
    let stream = 2 * u64::from(repeat);
    let mut actor = BernoulliActor::new(p, stream_rng(config.seed, stream));
    let mut critic = StochasticCritic::new(q, s, stream_rng(config.seed, stream + 1));
    let ac_config = AcConfig { max_iterations: z, critic_mode: CriticMode::Both };
    let task = bridge_task();
    let correct = (0..config.trials)
        .filter(|_| run_ac_loop(&mut actor, &mut critic, &task, &ac_config).final_sql == CORRECT_SQL)
        .count();
    correct as f64 / config.trials as f64
}
