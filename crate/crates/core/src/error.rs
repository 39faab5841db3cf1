use alloc::string::String;

/// Errors raised by the reconstruction pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("degenerate minimal sample")]
    DegenerateSample,
    #[error("zero parallax between the two views")]
    ZeroParallax,
    #[error("underconstrained: {0}")]
    Underconstrained(&'static str),
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("no valid sample among {attempted} attempts")]
    NoValidSample { attempted: usize },
    #[error(
        "exhaustive enumeration of {count} subsets exceeds cap {cap}; use randomized sampling"
    )]
    ExhaustiveTooLarge { count: u128, cap: u64 },
    #[error("node {0} has zero affinity row sum")]
    IsolatedNode(usize),
    #[error("eigen-decomposition failed: {0}")]
    EigenSolver(String),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("generator could not satisfy constraints: {0}")]
    Generator(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
