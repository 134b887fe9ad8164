use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {line}: {msg}")]
    Row { line: usize, msg: String },

    #[error("column {0} has zero variance")]
    DegenerateColumn(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("sample too small: need at least {need}, got {got}")]
    SampleTooSmall { need: usize, got: usize },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("date alignment failure: {0}")]
    Alignment(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
