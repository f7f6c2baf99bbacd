//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. Variants carry
//! enough context (column names, group indices, stage tags) that a message can
//! be surfaced to a CLI user without re-deriving state.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An input collection that must be non-empty was empty.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A catch-all for malformed arguments; the message names the problem.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A value that must be finite (time, feature, risk) was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Two parallel collections disagreed in length.
    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// A feature column had zero variance, so it cannot be normalized.
    #[error("zero-variance feature '{0}'")]
    ZeroVariance(String),

    /// The observed information matrix was singular or near-singular.
    #[error("collinear features: information matrix is singular")]
    CollinearFeatures,

    /// The Newton-Raphson solver failed to make progress.
    #[error("cox fit diverged: {0}")]
    CoxDiverged(String),

    /// A cohort contained no events where at least one was required.
    #[error("no events in cohort")]
    NoEvents,

    /// A log-rank test was requested on groups whose pooled data contain no
    /// events.
    #[error("degenerate log-rank test: pooled groups contain no events")]
    DegenerateLogRank,

    /// A pairwise log-rank test failed; the offending pair is tagged with
    /// zero-based group indices.
    #[error("log-rank test failed for group pair ({i}, {j}): {source}")]
    LogRankPair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    /// Pruning removed every feature.
    #[error("no significant features at alpha {0}")]
    NoSignificantFeatures(f64),

    /// Concordance was requested on data with no comparable pairs.
    #[error("no comparable pairs")]
    NoComparablePairs,

    /// AUC labelling left no positives or no negatives.
    #[error("no positive or no negative labels at horizon {0}")]
    DegenerateHorizon(f64),

    /// More than half of all bootstrap resamples were degenerate.
    #[error("unstable bootstrap: {degenerate} of {total} resamples degenerate")]
    UnstableBootstrap { degenerate: usize, total: usize },

    /// An expression referenced a variable absent from the evaluation row.
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    /// The expression parser rejected its input.
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    /// The search budget was exhausted before the first generation completed.
    #[error("budget too small: {0}")]
    BudgetTooSmall(String),

    /// A configuration value failed validation; the message names the field.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A referenced column does not exist in the table or CSV.
    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    /// A categorical value had no entry in the manifest encoding map.
    #[error("unmapped category '{value}' in column '{column}'")]
    UnmappedCategory { column: String, value: String },

    /// A non-numeric cell appeared where a number was required.
    #[error("non-numeric value '{value}' in column '{column}'")]
    NonNumericValue { column: String, value: String },

    /// An ordinal stage code was outside the declared code set.
    #[error("unknown stage code {code} (declared codes: {declared:?})")]
    UnknownStageCode { code: f64, declared: Vec<f64> },

    /// A decision list was assembled from a non-contiguous boundary set.
    #[error("missing boundary {0} in decision list")]
    MissingBoundary(usize),

    /// No censoring scale reaches the requested censoring rate closely
    /// enough on the drawn cohort.
    #[error("censoring target {target} infeasible: closest achievable rate is {achieved}")]
    CensoringInfeasible { target: f64, achieved: f64 },

    /// A pipeline stage failed; the stage tag localises the failure.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Filesystem failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV read/write failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Manifest or config deserialization failure.
    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    /// Report serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
