use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate segment")]
    DegenerateSegment,

    #[error("off-grid segment request at t = {0}")]
    OffGridSegment(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown initial data id `{0}`")]
    UnknownInitialData(String),

    #[error("unknown catalog problem `{0}`")]
    UnknownProblem(String),

    #[error("non-uniform time grid: {0}")]
    NonUniformGrid(String),

    #[error("non-finite functional value on scenario `{scenario}`, path {path}")]
    NonFiniteFunctional { scenario: String, path: usize },

    #[error("non-finite coefficient value from `{label}` at t = {t}")]
    NonFiniteCoefficient { label: String, t: f64 },

    #[error("non-finite increment on scenario `{scenario}`, path {path}, step {step}")]
    NonFiniteIncrement {
        scenario: String,
        path: usize,
        step: usize,
    },

    #[error("degenerate sampler: every sampled pair is identical")]
    DegenerateSampler,

    #[error("kappa function required for weak monotonicity check on `{0}`")]
    MissingKappa(String),

    #[error("grid or bundle mismatch: {0}")]
    Mismatch(String),

    #[error("non-contracting iteration: d_k = {last:e} after {iterations} iterations")]
    NonContracting { iterations: usize, last: f64 },

    #[error("bound escapes to infinity before t = {0}")]
    BoundEscapes(f64),

    #[error("need at least {needed} horizons, got {got}")]
    TooFewHorizons { needed: usize, got: usize },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
