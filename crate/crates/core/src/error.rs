use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column {column:?}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("outcome error at row {row}: {message}")]
    Outcome { row: usize, message: String },

    #[error("group {0:?} has no rows")]
    EmptyGroup(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("feature {0:?} has no observed training values")]
    UnfittableFeature(String),

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("feature {0:?} is constant")]
    DegenerateFeature(String),

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("coefficient of variation undefined: mean is zero")]
    ZeroMean,

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("too few rows: {0}")]
    TooFewRows(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("bootstrap retry budget exhausted after {0} single-class draws")]
    RetryBudget(usize),

    #[error("missing artifact {path:?}; run `{stage}` first")]
    MissingArtifact { path: String, stage: String },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad inputs or configuration rather than by a
    /// failing computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Schema(_)
            | Error::Config(_)
            | Error::UnknownFeature(_)
            | Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::Outcome { .. }
            | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }
}
