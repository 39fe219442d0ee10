use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use acsql_core::agents::LlmAgentFactory;
use acsql_core::engine::{latest_by_task, read_traces, run_batch, BatchSummary, TraceError};
use acsql_core::evalkit::{
    estimate_pqs, evaluate_run, render_ablation_table, render_report_table, run_ablation, EvalError, EvalOptions,
};
use acsql_core::llm_client::{ChatBackend, EndpointConfig, LlmClient};
use acsql_core::mc_sim::{simulate, simulate_via_engine, SimulationConfig, DEFAULT_REPEATS, DEFAULT_TRIALS};
use acsql_core::spider_data::{load_dataset, DataError, Dataset};
use acsql_core::theory::{contour_grid, expected_prob, limit_prob, write_contour_csv, AcParams};
use acsql_core::{AcTrace, CriticMode, StopReason};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

mod config;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Transport(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Data(e) => e.into(),
            other => CliError::Io(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "acsql", version, about = "Actor-critic text-to-SQL: theory, simulation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Closed-form accuracy of the actor-critic loop.
    #[command(subcommand)]
    Theory(TheoryCommand),
    /// Monte-Carlo estimate of the loop accuracy, printed as JSON.
    Simulate(SimulateArgs),
    /// Run and score the loop on a Spider-format benchmark.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args)]
struct Rates {
    /// Actor accuracy per generation.
    #[arg(long)]
    p: f64,
    /// Probability the critic accepts a wrong SQL.
    #[arg(long)]
    q: f64,
    /// Probability the critic rejects a correct SQL.
    #[arg(long)]
    s: f64,
}

#[derive(Subcommand)]
enum TheoryCommand {
    /// Expected accuracy after at most z generations.
    Prob {
        #[command(flatten)]
        rates: Rates,
        #[arg(long, default_value_t = 5)]
        z: u32,
        /// Decimal places printed.
        #[arg(long, default_value_t = 5)]
        precision: usize,
    },
    /// Accuracy as the budget grows without bound.
    Limit {
        #[command(flatten)]
        rates: Rates,
        #[arg(long, default_value_t = 5)]
        precision: usize,
    },
    /// CSV of accuracy over a (q, s) lattice.
    Contour {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 5)]
        z: u32,
        /// Points per axis.
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    rates: Rates,
    #[arg(long, default_value_t = 5)]
    z: u32,
    #[arg(long, default_value_t = DEFAULT_TRIALS, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = DEFAULT_REPEATS, value_parser = clap::value_parser!(u32).range(1..))]
    repeats: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run every trial through the full engine with stochastic agents.
    #[arg(long)]
    via_engine: bool,
}

#[derive(Args)]
struct DatasetArgs {
    /// Task file (dev.json style).
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Spider tables.json.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Directory holding <db_id>/<db_id>.sqlite.
    #[arg(long)]
    db_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    max_iterations: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    actor_url: Option<String>,
    #[arg(long)]
    actor_model: Option<String>,
    /// Critic endpoint; defaults to the actor's settings with this URL.
    #[arg(long)]
    critic_url: Option<String>,
    #[arg(long)]
    critic_model: Option<String>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Per-query execution time limit in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Run the loop over a dataset, appending traces. Finished tasks are skipped.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        mode: Option<CriticMode>,
        /// Trace file (JSON Lines).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a trace file.
    Report {
        #[arg(long)]
        traces: PathBuf,
        #[command(flatten)]
        score: ScoreArgs,
        /// Baseline accuracy for the improvement columns.
        #[arg(long, conflicts_with = "baseline_traces")]
        baseline_ex: Option<f64>,
        /// Trace file whose accuracy is the baseline.
        #[arg(long)]
        baseline_traces: Option<PathBuf>,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run and score every critic mode over the same tasks.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "none,llm_only,execution_only,both")]
        modes: Vec<CriticMode>,
        /// Directory for traces_<mode>.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        baseline_ex: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Estimate actor accuracy and critic error rates from traces.
    EstimatePqs {
        #[arg(long)]
        traces: PathBuf,
        #[command(flatten)]
        score: ScoreArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Theory(cmd) => theory(cmd),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Eval(cmd) => eval(cmd),
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn theory(cmd: TheoryCommand) -> Result<(), CliError> {
    match cmd {
        TheoryCommand::Prob { rates, z, precision } => {
            let params = AcParams::new(rates.p, rates.q, rates.s, z).map_err(usage)?;
            println!("{:.*}", precision, expected_prob(&params).map_err(usage)?);
        }
        TheoryCommand::Limit { rates, precision } => {
            println!("{:.*}", precision, limit_prob(rates.p, rates.q, rates.s).map_err(usage)?);
        }
        TheoryCommand::Contour { p, z, resolution, out } => {
            let grid = contour_grid(p, z, resolution).map_err(usage)?;
            let written = match &out {
                Some(path) => {
                    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    let mut writer = BufWriter::new(file);
                    write_contour_csv(&grid, &mut writer).and_then(|_| writer.flush())
                }
                None => write_contour_csv(&grid, io::stdout().lock()),
            };
            written.map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<(), CliError> {
    let params = AcParams::new(args.rates.p, args.rates.q, args.rates.s, args.z).map_err(usage)?;
    let config = SimulationConfig { params, trials: args.trials, repeats: args.repeats, seed: args.seed };
    let report = if args.via_engine { simulate_via_engine(&config) } else { simulate(&config) }.map_err(usage)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?);
    Ok(())
}

fn load(dataset: &DatasetArgs) -> Result<Dataset, CliError> {
    let need = |value: &Option<PathBuf>, flag: &str| {
        value.clone().ok_or_else(|| CliError::Usage(format!("{flag} is required")))
    };
    let tasks = need(&dataset.tasks, "--tasks")?;
    let tables = need(&dataset.tables, "--tables")?;
    let db_dir = need(&dataset.db_dir, "--db-dir")?;
    loaded(load_dataset(&tasks, &tables, &db_dir)?)
}

fn loaded(dataset: Dataset) -> Result<Dataset, CliError> {
    for skipped in &dataset.report.unloadable {
        warn!("skipping task {} ({}): {}", skipped.index, skipped.db_id, skipped.reason);
    }
    info!("loaded {}/{} tasks from {}", dataset.report.loaded, dataset.report.total, dataset.name);
    Ok(dataset)
}

fn read_latest(path: &Path) -> Result<Vec<AcTrace>, CliError> {
    if !path.is_file() {
        return Err(CliError::Io(format!("trace file {} does not exist", path.display())));
    }
    let log = read_traces(path, false)?;
    for warning in &log.warnings {
        warn!("{}:{}: skipped malformed line: {}", path.display(), warning.line, warning.message);
    }
    Ok(latest_by_task(log.traces))
}

fn resolve_run_config(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(run.config.as_deref())?;
    if let Some(path) = &run.dataset.tasks {
        config.tasks_path = Some(path.clone());
    }
    if let Some(path) = &run.dataset.tables {
        config.tables_path = Some(path.clone());
    }
    if let Some(path) = &run.dataset.db_dir {
        config.db_dir = Some(path.clone());
    }
    if let Some(z) = run.max_iterations {
        config.ac.max_iterations = z;
    }
    if let Some(n) = run.concurrency {
        config.concurrency = n;
    }
    if let Some(url) = &run.actor_url {
        config.actor.base_url = url.clone();
    }
    if let Some(model) = &run.actor_model {
        config.actor.model_name = model.clone();
    }
    if run.critic_url.is_some() || run.critic_model.is_some() {
        let critic = config.critic.get_or_insert_with(|| config.actor.clone());
        if let Some(url) = &run.critic_url {
            critic.base_url = url.clone();
        }
        if let Some(model) = &run.critic_model {
            critic.model_name = model.clone();
        }
    }
    Ok(config)
}

fn backend(endpoint: &EndpointConfig) -> Result<Arc<dyn ChatBackend>, CliError> {
    let client = LlmClient::new(endpoint.clone()).map_err(|e| CliError::Transport(e.to_string()))?;
    Ok(Arc::new(client))
}

fn factory(config: &RunConfig) -> Result<LlmAgentFactory, CliError> {
    let actor = backend(&config.actor)?;
    let critic = match &config.critic {
        Some(endpoint) if *endpoint == config.actor => Some(actor.clone()),
        Some(endpoint) => Some(backend(endpoint)?),
        None => None,
    };
    Ok(LlmAgentFactory { actor, critic, execution_timeout: Duration::from_millis(config.execution_timeout_ms) })
}

/// Errors left in the traces of a finished batch: database failures count as
/// I/O, everything else (the actor endpoint) as transport.
fn check_failures(path: &Path, summary: &BatchSummary) -> Result<(), CliError> {
    if summary.failed == 0 {
        return Ok(());
    }
    let traces = read_latest(path)?;
    let errors: Vec<&str> =
        traces.iter().filter(|t| t.stopped_by == StopReason::Error).filter_map(|t| t.error.as_deref()).collect();
    let first = errors.first().copied().unwrap_or_default();
    let message = format!(
        "{} task(s) failed and were recorded with stopped_by=error; rerun to retry them. First error: {first}",
        summary.failed
    );
    if !errors.is_empty() && errors.iter().all(|e| e.starts_with("cannot open database")) {
        Err(CliError::Io(message))
    } else {
        Err(CliError::Transport(message))
    }
}

fn eval(cmd: EvalCommand) -> Result<(), CliError> {
    match cmd {
        EvalCommand::Run { run, mode, output } => {
            let mut config = resolve_run_config(&run)?;
            if let Some(mode) = mode {
                config.ac.critic_mode = mode;
            }
            if let Some(output) = output {
                config.output = output;
            }
            config.validate(&[config.ac.critic_mode])?;
            let paths = config.dataset_paths()?;
            let dataset = loaded(load_dataset(paths.tasks, paths.tables, paths.db_dir)?)?;
            let contexts = dataset.contexts()?;
            let factory = factory(&config)?;
            let summary = run_batch(&contexts, &factory, &config.ac, &config.output, config.concurrency)?;
            eprintln!(
                "{}: {} skipped, {} accepted, {} budget exhausted, {} failed",
                config.output.display(),
                summary.skipped,
                summary.accepted,
                summary.budget_exhausted,
                summary.failed
            );
            check_failures(&config.output, &summary)
        }
        EvalCommand::Report { traces, score, baseline_ex, baseline_traces, json } => {
            let dataset = load(&score.dataset)?;
            let options = EvalOptions { timeout: Duration::from_millis(score.timeout_ms), baseline_ex };
            let baseline = match baseline_traces {
                Some(path) => Some(evaluate_run(&read_latest(&path)?, &dataset, &options).ex),
                None => baseline_ex,
            };
            let report = evaluate_run(&read_latest(&traces)?, &dataset, &options).with_baseline(baseline);
            if json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?);
            } else {
                print!("{}", render_report_table(std::slice::from_ref(&report)));
                for excluded in &report.excluded {
                    eprintln!("excluded {}: {}", excluded.task_id, excluded.reason);
                }
                if report.missing > 0 {
                    eprintln!("{} dataset task(s) have no trace", report.missing);
                }
            }
            Ok(())
        }
        EvalCommand::Ablation { run, modes, out_dir, baseline_ex, json } => {
            if modes.is_empty() {
                return Err(CliError::Usage("--modes is empty".into()));
            }
            let config = resolve_run_config(&run)?;
            config.validate(&modes)?;
            let paths = config.dataset_paths()?;
            let dataset = loaded(load_dataset(paths.tasks, paths.tables, paths.db_dir)?)?;
            let options = EvalOptions { timeout: Duration::from_millis(config.execution_timeout_ms), baseline_ex };
            let factory = factory(&config)?;
            let reports = run_ablation(
                &dataset,
                &modes,
                &factory,
                config.ac.max_iterations,
                &out_dir,
                config.concurrency,
                &options,
            )?;
            if json {
                println!("{}", serde_json::to_string_pretty(&reports).map_err(|e| CliError::Io(e.to_string()))?);
            } else {
                print!("{}", render_ablation_table(&reports));
            }
            for mode in &modes {
                let path = out_dir.join(format!("traces_{mode}.jsonl"));
                let failed = read_latest(&path)?.iter().filter(|t| t.stopped_by == StopReason::Error).count();
                if failed > 0 {
                    check_failures(&path, &BatchSummary { failed, ..Default::default() })?;
                }
            }
            Ok(())
        }
        EvalCommand::EstimatePqs { traces, score } => {
            let dataset = load(&score.dataset)?;
            let estimate = estimate_pqs(&read_latest(&traces)?, &dataset, Duration::from_millis(score.timeout_ms));
            println!("{}", serde_json::to_string_pretty(&estimate).map_err(|e| CliError::Io(e.to_string()))?);
            Ok(())
        }
    }
}
