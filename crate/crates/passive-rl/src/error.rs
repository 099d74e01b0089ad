use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building models, parsing inputs, or
/// running the solvers. Message text for parse/validation failures names the
/// offending line or table cell so callers can fix their input directly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("row (s={state},a={action}) sums to {sum}")]
    RowSum { state: usize, action: usize, sum: f64 },

    #[error("reward parameter out of [0,1] at (s={state},a={action}): {value}")]
    RewardRange { state: usize, action: usize, value: f64 },

    #[error("initial distribution sums to {sum}")]
    InitialDistSum { sum: f64 },

    #[error("support violation at (s={state},a={action}): numerator positive where reference is zero")]
    SupportViolation { state: usize, action: usize },

    #[error("reference state marginal is zero at s={state}")]
    ZeroStateMarginal { state: usize },

    #[error("kernel does not integrate to one: got {integral}")]
    KernelIntegral { integral: f64 },

    #[error("kernel moment of order {order} does not vanish: got {value}")]
    KernelMoment { order: usize, value: f64 },

    #[error("history space too large: {size} sequences exceeds limit {limit}")]
    EnumerationTooLarge { size: u128, limit: u128 },

    #[error("solver did not converge within {max_iters} iterations (grad_inf_norm={grad_inf_norm})")]
    NonConvergence { max_iters: usize, grad_inf_norm: f64 },

    #[error("online round {round}: {source}")]
    Round { round: usize, source: Box<Error> },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
