use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("group `{0}` is empty")]
    EmptyGroup(String),

    #[error("individual `{id}`: value index {value} out of range for trait {trait_index} (has {count} values)")]
    ValueOutOfRange {
        id: String,
        trait_index: usize,
        value: usize,
        count: usize,
    },

    #[error("individual `{id}` carries {got} trait values, schema has {expected}")]
    TupleLength {
        id: String,
        expected: usize,
        got: usize,
    },

    #[error("need at least {needed} individuals, got {got}")]
    TooFewIndividuals { needed: usize, got: usize },

    #[error("schema has a single aggregate identity (C = 1); diversity normalization is undefined")]
    SingleCell,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("unknown trait `{0}`")]
    UnknownTrait(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} = {value} lies outside [0, 1] beyond rounding tolerance")]
    OutOfUnitInterval { what: &'static str, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("cannot open {path}: {message}")]
    Open { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Runtime failures (as opposed to bad input) are reported with a distinct exit status.
    pub fn is_runtime(&self) -> bool {
        matches!(self, Error::Optimization(_))
    }
}
