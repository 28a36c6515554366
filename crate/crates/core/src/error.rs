use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rank must be at least 2, got {0}")]
    InvalidRank(u32),

    #[error("letter index {index} out of range for rank {rank}")]
    LetterOutOfRange { index: u32, rank: u32 },

    #[error("word is not reduced at position {0}")]
    NotReduced(usize),

    #[error("word is not cyclically reduced")]
    NotCyclicallyReduced,

    #[error("cannot parse word {text:?}: {reason}")]
    Parse { text: String, reason: String },

    #[error("trivial class")]
    TrivialClass,

    #[error("cylinder of the empty word is the whole space")]
    EmptyCylinder,

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("missing weight value for admissible block {0}")]
    MissingBlock(String),

    #[error("depth {0} exceeds the supported maximum of {max}", max = crate::symbolic::MAX_DEPTH)]
    DepthTooLarge(usize),

    #[error("rank mismatch: expected {expected}, got {found}")]
    RankMismatch { expected: u32, found: u32 },

    #[error("conjugator {0} is not in the restricted sphere of the given element")]
    NotInRestrictedSphere(String),

    #[error("spectral iteration failed after {0} iterations")]
    SpectralIterationFailed(usize),

    #[error("enumeration cap exceeded: population {population} > cap {cap}")]
    CapExceeded { population: u128, cap: u128 },

    #[error("degenerate weight: sigma^2 = {0:e} (cohomologous to a constant)")]
    DegenerateWeight(f64),

    #[error("empty sample")]
    EmptySample,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
