//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("event trace never enters the {h}x{w} frame (bins {lo:.1}..{hi:.1})")]
    EventNotObservable { h: usize, w: usize, lo: f64, hi: f64 },

    #[error("window shape {got_h}x{got_w} does not match expected {want_h}x{want_w}")]
    ShapeMismatch {
        want_h: usize,
        want_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("region rows {bin}..{bin_end} cols {col}..{col_end} out of bounds for {h}x{w} recording")]
    OutOfBounds {
        bin: usize,
        bin_end: usize,
        col: usize,
        col_end: usize,
        h: usize,
        w: usize,
    },

    #[error("timestamp {t:.3}s outside recording span [{start:.3}, {end:.3}]s")]
    TimestampGap { t: f64, start: f64, end: f64 },

    #[error("dataset too small: need at least {need} samples, have {have}")]
    TooFewSamples { need: usize, have: usize },

    #[error("node '{node}' violates the minimum-samples constraint: {have} < {need}")]
    NodeConstraint {
        node: String,
        have: usize,
        need: usize,
    },

    #[error("architecture descriptors differ: '{a}' vs '{b}'")]
    DescriptorMismatch { a: String, b: String },

    #[error("shot budget {shots} exceeds support size {support}")]
    ShotBudget { shots: usize, support: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
