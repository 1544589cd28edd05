use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting, de-biasing and audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("unit `{unit}` {msg}")]
    Referential { unit: String, msg: String },

    #[error("{} is required but does not exist", path.display())]
    MissingPanelFile { path: PathBuf },

    #[error("unit `{unit}` has a date gap: {before} is followed by {after}")]
    DateGap {
        unit: String,
        before: chrono::NaiveDate,
        after: chrono::NaiveDate,
    },

    #[error("invalid value: {0}")]
    Validation(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient sample size: {0}")]
    SampleSize(String),

    #[error("singular design matrix (condition number {condition:e})")]
    SingularDesign { condition: f64 },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("sample lies within {distance:e} of a pinball kink; re-seed the model or sample")]
    Kink { distance: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unit `{0}` has no forecasts")]
    MissingUnit(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable, machine-parsable category name, one per variant family.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Referential { .. } | Error::MissingPanelFile { .. } => "referential",
            Error::DateGap { .. } => "gap",
            Error::Validation(_) => "validation",
            Error::EmptyInput(_) => "empty-input",
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::SampleSize(_) => "sample-size",
            Error::SingularDesign { .. } => "singular-design",
            Error::Divergence { .. } => "divergence",
            Error::Kink { .. } => "kink",
            Error::Degenerate(_) => "degenerate",
            Error::MissingUnit(_) => "missing-unit",
            Error::Checkpoint(_) => "checkpoint",
            Error::Internal(_) => "internal",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
