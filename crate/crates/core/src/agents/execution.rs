use std::path::Path;
use std::time::Duration;

use rusqlite::Connection;

use super::{AgentError, Critic, CriticMode, CriticRequest, Verdict, VerdictSource};
use crate::sqlite::{self, QueryError};

/// Accepts a candidate iff it runs to completion on the task database,
/// whatever rows it returns. The connection is read-only, so write
/// statements are rejected.
pub struct ExecutionCritic {
    conn: Connection,
    timeout: Duration,
}

impl ExecutionCritic {
    pub fn open(db_path: &Path, timeout: Duration) -> Result<Self, AgentError> {
        let conn = sqlite::open_read_only(db_path)
            .map_err(|e| AgentError::Database { path: db_path.display().to_string(), reason: e.to_string() })?;
        Ok(ExecutionCritic { conn, timeout })
    }

    pub fn check(&self, candidate_sql: &str) -> Verdict {
        match sqlite::run_query(&self.conn, candidate_sql, self.timeout) {
            Ok(_) => Verdict::new(VerdictSource::Execution, true, ""),
            Err(QueryError::Timeout(limit)) => {
                Verdict::new(VerdictSource::Execution, false, format!("timeout after {limit:?}"))
            }
            Err(QueryError::Sql(message)) => Verdict::new(VerdictSource::Execution, false, message),
        }
    }
}

impl Critic for ExecutionCritic {
    fn review(&mut self, request: &CriticRequest<'_>, _mode: CriticMode) -> Result<Vec<Verdict>, AgentError> {
        Ok(vec![self.check(request.candidate_sql)])
    }
}
