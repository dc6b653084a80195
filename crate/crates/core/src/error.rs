use thiserror::Error;

use crate::events::EventStream;

pub type Result<T, E = HawkesError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("process is not stationary: branching ratio {ratio:.6} >= 1")]
    Stationarity { ratio: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Simulation hit `max_events`; the stream simulated so far is kept.
    #[error("simulation truncated after {} events at t = {:.6}", .partial.len(), .partial.horizon())]
    Truncated { partial: Box<EventStream> },

    #[error("training diverged at epoch {epoch} (row {row}): non-finite loss")]
    Divergence { row: usize, epoch: usize },

    #[error("singular linear system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("refusing to run: {0}")]
    Refused(String),

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<HawkesError>,
    },

    /// Failure inside one job of a multi-run study.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<HawkesError>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl HawkesError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        HawkesError::Argument(msg.into())
    }

    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_argument_error(&self) -> bool {
        match self {
            HawkesError::Argument(_)
            | HawkesError::Io(_)
            | HawkesError::Json(_)
            | HawkesError::Csv(_) => true,
            HawkesError::Row { source, .. } | HawkesError::Stage { source, .. } => source.is_argument_error(),
            _ => false,
        }
    }
}
