use thiserror::Error;

/// Errors surfaced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("ground truth unavailable: {0}")]
    GroundTruthUnavailable(&'static str),

    #[error("density check requires PMF")]
    DensityRequiresPmf,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("game over: all {0} rounds already answered")]
    GameOver(u64),

    #[error("exact oracle infeasible: 2^{0} seeds exceeds the enumeration cap")]
    ExactOracleInfeasible(u16),

    #[error("gradient norm exceeds 1")]
    GradientNormExceedsOne,

    #[error("malformed transcript: {0}")]
    MalformedTranscript(String),

    #[error("replay diverged from the recorded run at round {round}")]
    ReplayDivergence { round: u64 },

    #[error("master seed does not match transcript header")]
    SeedMismatch,

    #[error("insufficient rounds remaining: need {needed}, have {remaining}")]
    InsufficientRounds { needed: u64, remaining: u64 },

    #[error("query value {value} out of [-1,1] at point {point}")]
    QueryRangeExceeded { point: u64, value: f64 },

    #[error("inconclusive classification: interval [{lo}, {hi}] straddles a threshold")]
    InconclusiveClassification { lo: f64, hi: f64 },

    #[error("analyst produced a malformed query at round {round}: {reason}")]
    MalformedQuery { round: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
