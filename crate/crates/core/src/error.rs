use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model primitive violates its invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The on period would not terminate: the output rate does not exceed
    /// the input rate.
    #[error("unstable policy: {0}")]
    UnstablePolicy(String),

    /// An expectation required by the formula is infinite.
    #[error("divergent expectation: {0}")]
    Divergent(String),

    /// A capped Phase-I budget exceeds `r0 * E[V]`.
    #[error("infeasible budget: alpha = {alpha} exceeds the capped maximum {max}")]
    InfeasibleBudget { alpha: f64, max: f64 },

    /// A closed-form backend was requested for a workload law it does not
    /// cover.
    #[error("backend {backend} does not support workload law {law}")]
    BackendMismatch { backend: &'static str, law: &'static str },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("root search failed: {0}")]
    RootSearch(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidModel(msg.into())
    }
}
