use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("duplicate label {label:?} at row {row}")]
    DuplicateLabel { label: String, row: usize },

    #[error("row {row}: expected {expected} values, found {found}")]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: non-finite value at column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("row {row}: cannot parse value {value:?}")]
    Parse { row: usize, value: String },

    #[error("zero-vector row {label:?} cannot be normalized")]
    ZeroVector { label: String },

    #[error("table is not normalized: row {label:?} has norm {norm}")]
    NotNormalized { label: String, norm: f64 },

    #[error("missing label {0:?}")]
    MissingLabel(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("refiner contract violated in cell {cell}: {reason}")]
    RefinerContract { cell: String, reason: String },

    #[error("refiner failed in cell {cell}: {reason}")]
    RefinerFailed { cell: String, reason: String },

    #[error("degenerate base similarity {0}: use a sampler biased away from zero")]
    DegenerateBaseSimilarity(f64),

    #[error("invalid span: start {start} > end {end}")]
    InvalidInterval { start: f64, end: f64 },

    #[error("no ground-truth spans")]
    EmptyGroundTruth,

    #[error("empty event set")]
    EmptyEvents,

    #[error("event {index} covers less than one frame")]
    ShortEvent { index: usize },

    #[error("video {0:?} has predictions but no ground truth")]
    MissingGroundTruth(String),

    #[error("no video has a positive clip")]
    NoPositives,

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("gradient check failed: max relative error {max_rel_err:e} at coordinate {coord}")]
    GradientCheck { max_rel_err: f64, coord: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
