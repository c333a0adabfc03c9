use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("joint over {atoms} atoms exceeds the cap of {cap} atoms")]
    AtomCapExceeded { atoms: u128, cap: usize },
    #[error("negative probability {value} at {location}")]
    NegativeProbability { location: String, value: f64 },
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("duplicate entry for {0}")]
    DuplicateEntry(String),
    #[error("label out of range: {0}")]
    LabelOutOfRange(String),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("invalid epsilon {0}")]
    InvalidEpsilon(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear program failed: {0}")]
    LpFailure(String),

    #[error("inconsistent pairwise marginals: {0}")]
    InconsistentMarginals(String),
    #[error("d is not in the column space of Q (relative residual {0:e})")]
    DInconsistentWithQ(f64),
    #[error("Y is degenerate (P(Y=1) = {0})")]
    DegenerateY(f64),
    #[error("no joint distribution matches the given pairwise marginals")]
    EmptyClass,

    #[error("h-constraints violated: h(z) = {h_pos}, h(-z) = {h_neg}")]
    HConstraintViolated { h_pos: f64, h_neg: f64 },
    #[error("constructed marginals deviate from input by {0:e}")]
    MarginalMismatch(f64),
    #[error("z is not a stationary point (|2Qz - d| = {0:e})")]
    NotStationary(f64),

    #[error("variable has zero variance")]
    ZeroVariance,
    #[error("invalid correlation {0}")]
    InvalidRho(f64),
    #[error("inconsistent moments: {0}")]
    InconsistentMoments(String),

    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by malformed input files rather than by the
    /// numerical content of well-formed input.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse(_) | Error::Io(_))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
