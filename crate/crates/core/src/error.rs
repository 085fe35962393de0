use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("image has zero width or height")]
    EmptyImage,

    #[error("image contains a non-finite value at index {0}")]
    NonFinitePixel(usize),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient texture: no patch passes the sharpness threshold")]
    InsufficientTexture,

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("one-sided samples: AGGD fitting needs both negative and positive values")]
    OneSidedSamples,

    #[error("need at least {needed} feature vectors, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("model config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("feature length mismatch: expected {expected}, got {got}")]
    FeatureLength { expected: usize, got: usize },

    #[error("linear solve failed: pooled covariance is singular")]
    SingularCovariance,

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("loss term `{0}` is not implemented")]
    TermNotImplemented(String),

    #[error("unknown loss term `{0}`")]
    UnknownTerm(String),

    #[error("loss term `{term}` needs {what}")]
    MissingInput { term: String, what: &'static str },

    #[error("loss spec parse error at position {position}: {message} (token `{token}`)")]
    SpecParse {
        position: usize,
        token: String,
        message: String,
    },

    #[error("non-finite input: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
