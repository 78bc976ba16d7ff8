use thiserror::Error;

use crate::model::ParamName;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("indicator must be +1 or -1, got {0}")]
    InvalidIndicator(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: ParamName, reason: String },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("estimation window is empty")]
    EmptyWindow,
    #[error("indicator sequence is empty")]
    EmptyIndicators,
    #[error("counts B={buys}, S={sells} exceed the oracle limit of {limit}")]
    OracleScale { buys: u64, sells: u64, limit: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid estimator configuration: {0}")]
    Config(String),
    #[error("window {asset_id}/{period_label}: {reason}")]
    InvalidBounds {
        asset_id: String,
        period_label: String,
        reason: String,
    },
    #[error("window {asset_id}/{period_label}: all {n_draws} candidates have a degenerate likelihood ({cause})")]
    Degenerate {
        asset_id: String,
        period_label: String,
        n_draws: usize,
        cause: String,
    },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}, field `{field}`: {message}")]
    Row {
        line: u64,
        field: String,
        message: String,
    },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("pre-signed mode requires known sides; unknown side at rows {0:?}")]
    UnknownSides(Vec<usize>),
    #[error("market dates must be strictly increasing ({0})")]
    UnorderedDates(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("group `{0}` has fewer than 2 observations")]
    SmallGroup(String),
    #[error("need more observations than regressors (n={n}, k={k})")]
    TooFewObservations { n: usize, k: usize },
    #[error("design matrix is rank deficient; collinear columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need {required} assets for the size profile, have {available}")]
    InsufficientAssets { required: usize, available: usize },
}
