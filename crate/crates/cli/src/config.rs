use std::path::{Path, PathBuf};

use acsql_core::llm_client::EndpointConfig;
use acsql_core::{AcConfig, CriticMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_CONCURRENCY: usize = 4;

/// Everything `eval run` and `eval ablation` need. Loaded from JSON; flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub tasks_path: Option<PathBuf>,
    pub tables_path: Option<PathBuf>,
    pub db_dir: Option<PathBuf>,
    pub actor: EndpointConfig,
    /// Needed by `llm_only` and `both`. May point at the actor's endpoint.
    pub critic: Option<EndpointConfig>,
    pub ac: AcConfig,
    pub output: PathBuf,
    pub concurrency: usize,
    pub execution_timeout_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tasks_path: None,
            tables_path: None,
            db_dir: None,
            actor: EndpointConfig::default(),
            critic: None,
            ac: AcConfig::default(),
            output: PathBuf::from("traces.jsonl"),
            concurrency: DEFAULT_CONCURRENCY,
            execution_timeout_ms: 30_000,
        }
    }
}

/// Dataset locations after overrides, all present.
pub struct DatasetPaths<'a> {
    pub tasks: &'a Path,
    pub tables: &'a Path,
    pub db_dir: &'a Path,
}

fn need<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| CliError::Usage(format!("{flag} is required (flag or config file)")))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn dataset_paths(&self) -> Result<DatasetPaths<'_>, CliError> {
        Ok(DatasetPaths {
            tasks: need(&self.tasks_path, "--tasks")?,
            tables: need(&self.tables_path, "--tables")?,
            db_dir: need(&self.db_dir, "--db-dir")?,
        })
    }

    /// Checks the settings a run with `modes` depends on.
    pub fn validate(&self, modes: &[CriticMode]) -> Result<(), CliError> {
        if self.ac.max_iterations == 0 {
            return Err(CliError::Usage("max_iterations must be >= 1".into()));
        }
        if self.concurrency == 0 {
            return Err(CliError::Usage("concurrency must be >= 1".into()));
        }
        if let Some(mode) = modes.iter().find(|m| m.uses_llm()) {
            if self.critic.is_none() {
                return Err(CliError::Usage(format!("critic mode {mode} needs a critic endpoint in the config")));
            }
        }
        self.dataset_paths().map(|_| ())
    }
}
