use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("line {line}: close must be strictly positive for {coin_id} on {date}, got {close}")]
    NonPositiveClose {
        line: u64,
        coin_id: String,
        date: NaiveDate,
        close: f64,
    },

    #[error("line {line}: market cap must be non-negative for {coin_id} on {date}, got {market_cap}")]
    NegativeMarketCap {
        line: u64,
        coin_id: String,
        date: NaiveDate,
        market_cap: f64,
    },

    #[error("line {line}: duplicate record for ({coin_id}, {date})")]
    DuplicateRecord {
        line: u64,
        coin_id: String,
        date: NaiveDate,
    },

    #[error("line {line}: unparseable date {value:?}")]
    BadDate { line: u64, value: String },

    #[error("http request for {coin_id} failed after {attempts} attempts: {message}")]
    Http {
        coin_id: String,
        attempts: u32,
        message: String,
    },

    #[error("coin {0:?} is unknown to the market-data source")]
    UnknownCoin(String),

    #[error("unexpected response for {coin_id}: {message}")]
    BadResponse { coin_id: String, message: String },

    #[error("cache write failed for {path}: {source}")]
    CacheWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("zero variance in normalization window for {coin_id} on {date}")]
    ZeroWindowVariance { coin_id: String, date: NaiveDate },

    #[error("epoch {epoch}: only {eligible} eligible coins, need {required}")]
    InsufficientBreadth {
        epoch: usize,
        eligible: usize,
        required: usize,
    },

    #[error("zero variance of {coin_id} within epoch {epoch}")]
    ZeroVariance { coin_id: String, epoch: usize },

    #[error("missing normalized return for {coin_id} on {date}")]
    MissingReturn { coin_id: String, date: NaiveDate },

    #[error("null model undefined for T = {0} (need T > 3)")]
    NullModelUndefined(usize),

    #[error("graph {0} has no nodes")]
    EmptyGraph(usize),

    #[error("kernel matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("non-finite eigenvalue in spectrum")]
    NonFiniteEigenvalue,

    #[error("zero row in spectral embedding for epoch {0}")]
    ZeroEmbeddingRow(usize),

    #[error("regime correlation matrix is not positive semidefinite (min eigenvalue {0})")]
    RegimeNotPsd(f64),

    #[error("regime schedule does not cover epoch {0}")]
    ScheduleGap(usize),

    #[error("epoch {0} is governed by more than one regime")]
    ScheduleOverlap(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

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

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
