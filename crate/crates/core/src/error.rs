use thiserror::Error;

use crate::profile::ProfileError;

/// Raised when the simulator's own bookkeeping breaks a protocol rule.
///
/// These indicate a bug in the simulator, never a bad input; a run that hits
/// one is aborted.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("session {session}: completion {event} does not match phase {phase}")]
    PhaseMismatch {
        session: u32,
        phase: String,
        event: String,
    },
    #[error("session {session}: decode step on unsealed KV entry")]
    UnsealedDecode { session: u32 },
    #[error("session {session}: KV prefix would shrink from {current} to {requested}")]
    PrefixShrink {
        session: u32,
        current: u64,
        requested: u64,
    },
    #[error("session {session}: no KV entry")]
    MissingKv { session: u32 },
}

/// Configuration or argument validation failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }

    pub fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("infeasible reservation: target {target} slots exceeds {total} available")]
    InfeasibleReservation { target: f64, total: u32 },
    #[error("trace i/o: {0}")]
    TraceIo(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// 1-based line number of a byte offset in `source`.
pub(crate) fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())]
        .bytes()
        .filter(|b| *b == b'\n')
        .count()
        + 1
}
