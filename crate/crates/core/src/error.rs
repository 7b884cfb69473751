use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants map one-to-one onto the error conditions of the individual
/// operations; the harness turns them into process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(String),
    #[error("backward called before forward")]
    NoForwardPass,
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("unbound graph input `{0}`")]
    UnboundInput(String),

    #[error("ragged rows: row {row} has {found} cells, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("empty table")]
    EmptyTable,
    #[error("duplicate header `{0}`")]
    DuplicateHeader(String),
    #[error("column `{0}` is not quantitative")]
    NonQuantitativeColumn(String),
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("no such column `{0}`")]
    NoSuchColumn(String),
    #[error("row {row} out of range (table has {rows} rows)")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("bad parameters: {0}")]
    BadParameters(String),

    #[error("k = {k} must be smaller than n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("degenerate data: all points identical")]
    DegenerateData,
    #[error("width mismatch: expected {expected}, got {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("too few observations: {0} (need at least 10)")]
    TooFewObservations(usize),

    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("no influential attribute")]
    NoInfluentialAttribute,
    #[error("empty attribute mask")]
    EmptyMask,
    #[error("empty target list")]
    EmptyTargets,

    #[error("table has no quantitative column")]
    NoQuantitativeColumn,
    #[error("no successful edit within budget")]
    NoSuccessWithinBudget,
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("table has a single column")]
    SingleColumn,
    #[error("no permutation flips the top recommendation")]
    NoFlippingPermutation,
    #[error("not enough columns")]
    NotEnoughColumns,
    #[error("no candidate point flips the recommendation")]
    NoCandidateFound,
    #[error("inversion failed: {0}")]
    InversionFailed(String),
    #[error("end-to-end mismatch: flip holds under the substitute but not the target")]
    EndToEndMismatch,

    #[error("config error: {0}")]
    Config(String),
    #[error("empty plot binding")]
    EmptyBinding,
    #[error("metric kinds differ")]
    KindMismatch,
    #[error("bad model file: {0}")]
    BadModelFile(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
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
