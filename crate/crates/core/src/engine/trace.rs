//! JSON Lines trace log, one [`AcTrace`] per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use super::AcTrace;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("cannot serialize trace: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineWarning {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct TraceLog {
    pub traces: Vec<AcTrace>,
    pub warnings: Vec<LineWarning>,
}

/// Appends traces to a file. Lines from concurrent writers never interleave.
pub struct TraceWriter {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl TraceWriter {
    pub fn append(path: &Path) -> Result<Self, TraceError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
        Ok(TraceWriter { path: path.to_path_buf(), out: Mutex::new(BufWriter::new(file)) })
    }

    pub fn write(&self, trace: &AcTrace) -> Result<(), TraceError> {
        let mut line = serde_json::to_string(trace)?;
        line.push('\n');
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        out.write_all(line.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|source| TraceError::Io { path: self.path.clone(), source })
    }
}

/// Replaces `path` with exactly `traces`.
pub fn write_traces(path: &Path, traces: &[AcTrace]) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for trace in traces {
        serde_json::to_writer(&mut out, trace)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads every trace in `path`. Blank lines are ignored. A malformed line is
/// an error when `strict`, otherwise it is skipped and reported as a warning.
pub fn read_traces(path: &Path, strict: bool) -> Result<TraceLog, TraceError> {
    let io_err = |source| TraceError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut log = TraceLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AcTrace>(&line) {
            Ok(trace) => log.traces.push(trace),
            Err(e) if strict => {
                return Err(TraceError::Malformed { path: path.to_path_buf(), line: idx + 1, message: e.to_string() })
            }
            Err(e) => {
                log::warn!("{}:{}: skipping malformed trace: {e}", path.display(), idx + 1);
                log.warnings.push(LineWarning { line: idx + 1, message: e.to_string() });
            }
        }
    }
    Ok(log)
}

/// Keeps the last trace recorded for each task, in order of first appearance.
pub fn latest_by_task(traces: Vec<AcTrace>) -> Vec<AcTrace> {
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<AcTrace> = Vec::new();
    for trace in traces {
        match slot.get(&trace.task.task_id) {
            Some(&idx) => out[idx] = trace,
            None => {
                slot.insert(trace.task.task_id.clone(), out.len());
                out.push(trace);
            }
        }
    }
    out
}
