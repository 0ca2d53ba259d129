use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("NaN in input `{0}`")]
    NaN(&'static str),

    #[error("invalid probability pair ({p0}, {p1})")]
    InvalidProbability { p0: f64, p1: f64 },

    #[error("invalid one-hot label ({y0}, {y1})")]
    InvalidLabel { y0: u8, y1: u8 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("singular input: {0}")]
    Singular(&'static str),

    #[error("empty batch")]
    EmptyBatch,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("example {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible transform: {0}")]
    Infeasible(String),

    #[error("training diverged at epoch {epoch}: non-finite loss {value}")]
    Diverged { epoch: usize, value: f64 },

    #[error("seed {seed}: {source}")]
    AtSeed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_index(index: usize, source: Error) -> Self {
        Error::AtIndex {
            index,
            source: Box::new(source),
        }
    }

    /// True for errors caused by bad configuration rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidParameter { .. } | Error::Infeasible(_) => true,
            Error::AtSeed { source, .. } | Error::AtIndex { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
