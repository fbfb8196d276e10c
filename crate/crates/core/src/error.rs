//! Error type shared by all engine modules. Each variant carries a stable
//! machine-readable code that the CLI surfaces in JSON diagnostics.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("malformed rational literal `{0}`")]
    BadRational(String),
    #[error("substructure is not closed under generation: `{0}` is missing")]
    UnclosedInput(String),
    #[error("substructure references unknown universe `{0}`")]
    UnknownUniverse(String),
    #[error("unknown point id `{0}`")]
    UnknownPoint(String),
    #[error("`{0}` is not a subset of `{1}`")]
    NotSubset(String, String),
    #[error("triple references missing element `{0}`")]
    MalformedTriple(String),
    #[error("embedding of `{0}` is not strong: {1}")]
    NotStrong(String, String),
    #[error("operation would exceed the hard budget of {0} elements")]
    CapExceeded(usize),
    #[error("variety is not normal: worst projection {0}")]
    NotNormal(String),
    #[error("variety is not free: {0}")]
    NotFree(String),
    #[error("variety has dimension {found}, expected {expected}")]
    WrongDim { expected: usize, found: usize },
    #[error("projection index out of range: {0}")]
    BadIndex(usize),
    #[error("y-component {0} is identically zero under a monomial map")]
    NegativeBase(usize),
    #[error("all {0} samples hit a vanishing denominator")]
    SingularSampleExhausted(usize),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("denominator polynomial vanishes identically on the variety")]
    FVanishes,
    #[error("series order {0} too small to determine the result")]
    OrderTooSmall(i64),
    #[error("internal consistency failure: non-integer coefficient {0}")]
    NonIntegerResult(String),
    #[error("normalization overflow: {0}")]
    NormalizationOverflow(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed expression `{0}`: {1}")]
    BadExpression(String, String),
    #[error("invalid input: {0}")]
    BadInput(String),
}

impl Error {
    /// Stable machine-readable code for reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BadRational(_) => "BAD_RATIONAL",
            Error::UnclosedInput(_) => "UNCLOSED_INPUT",
            Error::UnknownUniverse(_) => "UNKNOWN_UNIVERSE",
            Error::UnknownPoint(_) => "UNKNOWN_POINT",
            Error::NotSubset(_, _) => "NOT_SUBSET",
            Error::MalformedTriple(_) => "MALFORMED_TRIPLE",
            Error::NotStrong(_, _) => "NOT_STRONG",
            Error::CapExceeded(_) => "CAP_EXCEEDED",
            Error::NotNormal(_) => "NOT_NORMAL",
            Error::NotFree(_) => "NOT_FREE",
            Error::WrongDim { .. } => "WRONG_DIM",
            Error::BadIndex(_) => "BAD_INDEX",
            Error::NegativeBase(_) => "NEGATIVE_BASE",
            Error::SingularSampleExhausted(_) => "SINGULAR_SAMPLE_EXHAUSTED",
            Error::DegenerateSample(_) => "DEGENERATE_SAMPLE",
            Error::FVanishes => "F_VANISHES",
            Error::OrderTooSmall(_) => "ORDER_TOO_SMALL",
            Error::NonIntegerResult(_) => "NONINTEGER_RESULT",
            Error::NormalizationOverflow(_) => "NORMALIZATION_OVERFLOW",
            Error::Unsupported(_) => "UNSUPPORTED",
            Error::BadExpression(_, _) => "BAD_EXPRESSION",
            Error::BadInput(_) => "BAD_INPUT",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
