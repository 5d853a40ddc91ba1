//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Errors raised by schema handling, mechanisms, generators and the harness.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    // schema and ingestion
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("unknown value `{value}` for categorical column `{column}` (row {row})")]
    UnknownCategoricalValue { column: String, value: String, row: usize },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("file has no header or no rows")]
    EmptyFile,
    #[error("domain size exceeds cap of {cap}")]
    OverflowGuard { cap: u128 },

    // workload
    #[error("k = {k} exceeds the {columns} available columns")]
    KTooLarge { k: usize, columns: usize },
    #[error("duplicate or invalid column subset {0:?}")]
    DuplicateSubset(Vec<usize>),
    #[error("column `{0}` has the wrong kind for this workload")]
    WrongColumnKind(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("candidate pool is empty")]
    EmptyPool,

    // privacy
    #[error("sensitivity must be positive, got {0}")]
    NonPositiveSensitivity(f64),
    #[error("infinite budget has no finite noise calibration")]
    InfiniteBudget,
    #[error("invalid privacy parameter: {0}")]
    InvalidBudget(String),
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("privacy budget exceeded: charge `{label}` of rho {rho} would bring total to {total} over cap {cap}")]
    BudgetExceeded { label: String, rho: f64, total: f64, cap: f64 },

    // generator
    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("generator authentication failed: {0}")]
    AuthFailure(String),
    #[error("malformed generator response ({reference}): {reason}")]
    MalformedResponse { reference: String, reason: String },
    #[error("retry budget exhausted: {got} of {wanted} valid records")]
    RetryBudgetExhausted { got: usize, wanted: usize },
    #[error("cache schema hash {found} does not match schema hash {expected}")]
    SchemaHashMismatch { expected: String, found: String },
    #[error("corrupt cache: {0}")]
    CorruptCache(String),
    #[error("variation request refused: {0}")]
    PrivacyFirewall(String),
    #[error("invalid generator configuration: {0}")]
    InvalidGeneratorConfig(String),

    // public-fit
    #[error("public dataset is empty")]
    EmptyPublicSet,
    #[error("fitted weights are all zero")]
    DegenerateFit,

    // harness
    #[error("configuration error: {0}")]
    Config(String),
    #[error("workload hash mismatch: {0} vs {1}")]
    WorkloadMismatch(String, String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors that signal privacy budget exhaustion.
    pub fn is_budget_error(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }

    /// True for errors that stem from invalid user-supplied configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidSchema(_)
                | Error::InvalidBudget(_)
                | Error::InvalidGeneratorConfig(_)
                | Error::MissingColumn(_)
                | Error::KTooLarge { .. }
                | Error::DuplicateSubset(_)
                | Error::WrongColumnKind(_)
                | Error::ZeroIterations
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
