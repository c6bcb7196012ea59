//! Persistence: session logs, run configuration and report files.

mod config;
mod log;
mod report;

pub use config::{RunConfig, SimulatorSettings, StimSettings, SEED_ENV};
pub use log::{load_session_log, LogHeader, LogRecord, LogWriter, RecordKind, SessionLog, HEADER_END, LOG_MAGIC};
pub use report::{csv_to_dat, write_reports, Results};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    InvariantViolation { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[source] std::io::Error),
    #[error("nothing to report")]
    EmptyResults,
    #[error("config: {0}")]
    Config(String),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn from_write(source: std::io::Error) -> Self {
        IoError::Write(source)
    }
}
