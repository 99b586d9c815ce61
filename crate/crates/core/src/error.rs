use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite sample value at z = {re} + {im}i")]
    NonFiniteSample { re: f64, im: f64 },

    #[error("window half-width {window} is below the required {required}")]
    WindowTooSmall { window: f64, required: f64 },

    #[error("warped term evaluated without a carrier polynomial")]
    MissingCarrier,

    #[error("index {index} is beyond the explicit list of length {len}")]
    IndexOutOfRange { index: String, len: usize },

    #[error("enumeration exhausted: every listed element is already used")]
    Exhausted,

    #[error("degenerate interval ({lo}, {hi})")]
    DegenerateInterval { lo: f64, hi: f64 },

    #[error("search cap exceeded: {0}")]
    CapExceeded(String),

    #[error("bracket expansion for target {target} exceeded 2^60")]
    BracketOverflow { target: f64 },

    #[error("invariant breach: {0}")]
    InvariantBreach(String),

    #[error("least-squares system is rank deficient (rank {rank}, need {needed})")]
    RankDeficient { rank: usize, needed: usize },

    #[error("constraint system is singular: {0}")]
    SingularConstraints(String),

    #[error("degree escalation reached cap {degree}: residual {residual:e} vs target {target:e}")]
    DegreeCap {
        degree: usize,
        residual: f64,
        target: f64,
    },

    #[error("patch stage {stage} missed its budget: measured {measured:e}, budget {budget:e}")]
    StageFailure {
        stage: usize,
        measured: f64,
        budget: f64,
    },

    #[error("invalid budget schedule: {0}")]
    InvalidBudget(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
