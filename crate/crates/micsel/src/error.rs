use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors across scoring, estimation, selection, simulation and ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter vector has length {actual}, model expects {expected}")]
    ParamLength { expected: usize, actual: usize },

    #[error("observation kind `{actual}` does not match the model's expected `{expected}`")]
    ObsKindMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("lag window supplies {actual} lags, model of order {expected} needs exactly {expected}")]
    LagCount { expected: usize, actual: usize },

    #[error("non-finite score at observation {index}")]
    NonFiniteScore { index: usize },

    #[error("truncation L={truncation_l} leaves no window in a series of length {n_raw}")]
    InvalidWindow { truncation_l: usize, n_raw: usize },

    #[error("dataset is empty")]
    EmptyData,

    #[error("dataset has zero variance; cannot initialize")]
    ZeroVariance,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("objective is not finite at the initial point")]
    NonFiniteAtInit,

    #[error("optimizer stalled: {halvings} learning-rate halvings without a finite step")]
    StepRejectionsExhausted { halvings: u32 },

    #[error("AR coefficients are nonstationary (companion spectral radius {spectral_radius})")]
    Nonstationary { spectral_radius: f64 },

    #[error("every candidate fit failed in the scan")]
    AllCandidatesFailed,

    #[error("singular curvature matrix in the bias estimate")]
    SingularBias,

    #[error("design matrix is rank deficient (rank {rank} of {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv: missing column `{name}`")]
    MissingColumn { name: String },

    #[error("csv file `{path}` has no data rows")]
    EmptyCsv { path: String },

    #[error("csv line {line}: cell `{value}` in column `{column}` is not numeric")]
    CsvCell {
        line: u64,
        column: String,
        value: String,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("transform failed at row {index}: {msg}")]
    Transform { index: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
