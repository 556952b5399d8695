use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("duplicate article id {0}")]
    DuplicateId(String),

    #[error("line {line}: unparseable timestamp {value:?}")]
    Timestamp { line: usize, value: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty vocabulary: no token reaches min_count {0}")]
    EmptyVocabulary(usize),

    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),

    #[error("undefined similarity for empty document {0}")]
    ZeroNorm(String),

    #[error("no threshold achieves target giant-component fraction {0}")]
    NoThreshold(f64),

    #[error("no window sweep possible: {0}")]
    WindowSweep(String),

    #[error("no λ matches peak range [{low}, {high}]")]
    NoLambda { low: f64, high: f64 },

    #[error("integration unstable at t = {t}: value {value} exceeds 1.5; use a smaller dt")]
    Unstable { t: f64, value: f64 },

    #[error("probability {value} for article {article} at step {step} is outside [0, 1]")]
    ProbabilityOutOfRange { article: usize, step: usize, value: f64 },

    #[error("spread network is not a forest: cycle through node {0}")]
    Cycle(String),

    #[error("node sets differ: {0}")]
    NodeSetMismatch(String),

    #[error("empirical and simulated day ranges do not overlap")]
    DisjointRanges,

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
