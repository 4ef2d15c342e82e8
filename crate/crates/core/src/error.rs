use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("join error: no cost profile for channel(s) {}", missing.join(", "))]
    Join { missing: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("singular within-state scatter for channel {channel}")]
    Singularity { channel: String },

    #[error("metric errors in {} channel(s): {}", .0.len(), summarize(.0))]
    Channels(Vec<(String, Error)>),

    #[error("assembly error: channel {channel} has no usable {field}")]
    Assembly { channel: String, field: &'static str },

    #[error("model error for DMU {dmu}: {message}")]
    Model { dmu: String, message: String },

    #[error("DEA failed for {} DMU(s): {}", .0.len(), summarize(.0))]
    Dmus(Vec<(String, Error)>),

    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),

    #[error("training error: {0}")]
    Training(String),

    #[error("split error: {0}")]
    Split(String),
}

fn summarize(items: &[(String, Error)]) -> String {
    items
        .iter()
        .map(|(id, e)| format!("{id}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input files, flags or configuration,
    /// as opposed to failures inside a computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Schema(_)
                | Error::Shape(_)
                | Error::Data { .. }
                | Error::Conflict(_)
                | Error::Join { .. }
                | Error::Config(_)
                | Error::Parameter(_)
                | Error::Usage(_)
        )
    }
}
