use std::path::PathBuf;

use thiserror::Error;

/// Everything a command can fail with. The variant decides the exit code:
/// problems with the invocation, config or input files exit with 2, anything
/// else with 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    MissingInput { path: PathBuf, source: std::io::Error },
    #[error("run directory {dir} lacks {}", missing.join(", "))]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            _ => 2,
        }
    }
}

impl From<proxforest::data::DataError> for CliError {
    fn from(e: proxforest::data::DataError) -> Self {
        use proxforest::data::DataError;
        match e {
            DataError::Io(_) => CliError::Internal(e.into()),
            other => CliError::InvalidInput(other.to_string()),
        }
    }
}

impl From<proxforest::forest::ForestError> for CliError {
    fn from(e: proxforest::forest::ForestError) -> Self {
        use proxforest::forest::ForestError;
        match e {
            ForestError::Data(d) => d.into(),
            ForestError::SchemaMismatch
            | ForestError::SingleClassInput
            | ForestError::InvalidParams(_)
            | ForestError::UnsupportedVersion(_)
            | ForestError::Json(_) => CliError::InvalidInput(e.to_string()),
            other => CliError::Internal(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.into())
    }
}

macro_rules! internal_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Internal(e.into())
            }
        })*
    };
}

internal_from!(
    proxforest::proximity::ProximityError,
    proxforest::outlier::OutlierError,
    proxforest::metrics::MetricsError,
    proxforest::mds::MdsError
);

impl From<proxforest::analysis::AnalysisError> for CliError {
    fn from(e: proxforest::analysis::AnalysisError) -> Self {
        use proxforest::analysis::AnalysisError;
        match e {
            AnalysisError::Metrics(m) => m.into(),
            other => CliError::InvalidInput(other.to_string()),
        }
    }
}

impl From<proxforest::modelsel::ModelSelError> for CliError {
    fn from(e: proxforest::modelsel::ModelSelError) -> Self {
        use proxforest::modelsel::ModelSelError;
        match e {
            ModelSelError::EmptyGrid(_) => CliError::Config(e.to_string()),
            ModelSelError::Data(d) => d.into(),
            ModelSelError::Forest(f) => f.into(),
            other => CliError::Internal(other.into()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
