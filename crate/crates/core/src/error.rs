use thiserror::Error;

/// Errors produced by model construction, integration, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("history underrun: lag lookup at t={requested} but history starts at t={available}")]
    HistoryUnderrun { requested: f64, available: f64 },

    #[error("step size underflow at t={t} (h={h:e}); system too stiff for an explicit solver")]
    Stiffness { t: f64, h: f64 },

    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),

    #[error("insufficient signal: only {reached} process(es) crossed the threshold")]
    InsufficientSignal { reached: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical integration itself, as opposed
    /// to bad inputs or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Stiffness { .. } | Error::HistoryUnderrun { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
