use thiserror::Error;

/// Invalid datasets and split requests.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("insufficient shots: class {class} has {available} samples, {required} required")]
    InsufficientShots {
        class: usize,
        available: usize,
        required: usize,
    },
    #[error("source has no labels")]
    MissingLabels,
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("feature dimension must be at least 1")]
    ZeroDimension,
    #[error("{what} length mismatch: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label {label} at index {index} outside [0, {class_count})")]
    LabelOutOfRange {
        index: usize,
        label: i64,
        class_count: usize,
    },
    #[error("duplicate sample id {0}")]
    DuplicateId(u64),
    #[error("unknown sample id {0}")]
    UnknownId(u64),
    #[error("misaligned sources: {0}")]
    MisalignedSources(String),
}

/// Failures decoding or encoding EMB1 containers and `.head` files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("non-finite {block} value at row {row}, column {col}")]
    NonFinite {
        block: &'static str,
        row: usize,
        col: usize,
    },
    #[error("label {label} at index {index} outside [0, {class_count})")]
    LabelOutOfRange {
        index: usize,
        label: i64,
        class_count: u32,
    },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Head training and inference errors.
#[derive(Debug, Error)]
pub enum HeadError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("divergence: non-finite loss at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid targets: {0}")]
    InvalidTargets(String),
}

/// Contract violations for the unsupervised criteria.
///
/// Degenerate-but-valid inputs are not errors; they yield
/// [`Score::Undefined`](crate::validators::Score::Undefined).
#[derive(Debug, Error)]
pub enum ValidatorError {
    #[error("label length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("row {row} is not a probability distribution (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },
    #[error("too few points: {points} points for {clusters} clusters")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("ragged score table: row {row} has {len} entries, expected {expected}")]
    Ragged {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Pseudo-label generation and ensembling errors.
#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("misaligned sources: {0}")]
    Misaligned(String),
    #[error("no sources to ensemble")]
    NoSources,
    #[error("source {source_index} row {row} is not one-hot")]
    NotOneHot { source_index: usize, row: usize },
    #[error("invalid threshold {0}; must lie in [0, 1]")]
    InvalidThreshold(f64),
    #[error("invalid soft labels: {0}")]
    InvalidSoftLabels(String),
}

/// Orchestration failures, with the failing (head, view) pair where known.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("{required} sources required, {available} available")]
    InsufficientSources { available: usize, required: usize },
    #[error("pair n={head} m={view}: {error}")]
    Head {
        head: usize,
        view: usize,
        #[source]
        error: HeadError,
    },
    #[error("pair n={head} m={view}: {error}")]
    Validator {
        head: usize,
        view: usize,
        #[source]
        error: ValidatorError,
    },
    #[error(transparent)]
    Panel(#[from] ValidatorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
