use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sample smaller than degree: n = {n}, m = {m}")]
    SampleTooSmall { n: usize, m: usize },

    #[error(
        "enumeration cap exceeded: C({n}, {m}) = {tuples} > {cap} tuples; use u_statistic_incomplete"
    )]
    EnumerationCap {
        n: usize,
        m: usize,
        tuples: u128,
        cap: u64,
    },

    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite kernel value {value} at arguments {args:?}")]
    NonFinite { value: f64, args: Vec<f64> },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("sequence too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by the caller's configuration rather than
    /// by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidParameter(_)
                | Error::EnumerationCap { .. }
                | Error::SampleTooSmall { .. }
                | Error::DegreeMismatch { .. }
                | Error::OutOfScope(_)
                | Error::TooShort { .. }
                | Error::Empty(_)
                | Error::Io { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
