use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("table has no data rows")]
    EmptyTable,

    #[error("invalid query: {0}")]
    Query(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("binning error: {0}")]
    Binning(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("degenerate vocabulary: {0}")]
    DegenerateVocabulary(String),

    #[error("no vector for token {0:?}")]
    MissingVector(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("table has not been preprocessed: {0}")]
    NotPreprocessed(String),

    #[error("invalid session log: {0}")]
    SessionLog(String),

    #[error("artifact format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
