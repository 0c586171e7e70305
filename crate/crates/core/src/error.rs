use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value {value} at parameter index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("parameter {beta} lies outside its support ({lo}, {hi})")]
    OutOfSupport { beta: f64, lo: f64, hi: f64 },

    #[error("every token is masked at step {step}")]
    AllMasked { step: usize },

    #[error("sequence reached the hard length limit of {0} tokens without completing")]
    MaxLength(usize),

    #[error("truncated normal is numerically degenerate on ({lo}, {hi}) with mean {mean}, sigma {sigma}")]
    DegenerateTruncation { mean: f64, sigma: f64, lo: f64, hi: f64 },

    #[error("malformed traversal: {0}")]
    MalformedTraversal(String),

    #[error("parse error at byte {position} (`{token}`): {reason}")]
    Parse { position: usize, token: String, reason: String },

    #[error("step called on a finished episode")]
    EpisodeDone,

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("degenerate dataset: target variance is zero")]
    DegenerateDataset,

    #[error("evaluation budget too small: no complete batch could be evaluated")]
    EmptyBest,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
