use thiserror::Error;

/// Errors raised by the inference routines and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("table needs at least 2 participants, found {0}")]
    TooFewParticipants(usize),
    #[error("empty {0} arm")]
    EmptyArm(&'static str),
    #[error("non-finite outcome on row {row}")]
    NonFiniteOutcome { row: usize },
    #[error("mixed stratum labeling: {labeled} of {total} rows carry a stratum label")]
    MixedStratumLabeling { labeled: usize, total: usize },
    #[error("stratified analysis requires a stratum label on every row")]
    MissingStrata,
    #[error("stratum without controls: {0}")]
    StratumWithoutControls(String),
    #[error("stratum without treated units: {0}")]
    StratumWithoutTreated(String),
    #[error("placebo analysis requires a limit of detection")]
    MissingLod,
    #[error("control outcome {value} on row {row} exceeds the limit of detection {lod}")]
    NotPlacebo { row: usize, value: f64, lod: f64 },
    #[error("science table incomplete: {0}")]
    ScienceTableIncomplete(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("rank k = {k} out of range 1..={n}")]
    RankOutOfRange { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("exact enumeration needs {needed} assignments, above the cap of {cap}")]
    ExactCapExceeded { needed: u128, cap: u64 },
    #[error("bisection failed to bracket the target {target}: achievable union probability in [{low}, {high}]")]
    BisectionBracket { target: f64, low: f64, high: f64 },
    #[error("stratum {0} is not a matched pair (one treated, one control)")]
    NonPairStratum(String),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the filesystem or of reading/writing files, as
    /// opposed to problems with the data or the requested analysis.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
