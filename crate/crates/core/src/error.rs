use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GctError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An action and a longitudinal event share the same time.
    #[error("simultaneous action and longitudinal event at t = {time}")]
    Tie { time: f64 },

    /// Recorded actions are not a prefix of what the plan prescribes.
    #[error("plan state error: {0}")]
    PlanState(String),

    /// More events than the scenario's explosion guard allows.
    #[error("explosion guard exceeded: more than {n_max} events")]
    Explosion { n_max: usize },

    /// Every posterior weight underflowed during a survival update.
    #[error("numerical underflow in posterior update")]
    NumericalUnderflow,

    /// An event was observed that the model gives zero intensity.
    #[error("event at t = {time} lies outside the model's support")]
    Support { time: f64 },

    /// Quadrature or another numerical routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A scenario or plan failed validation.
    #[error("invalid input: {0}")]
    Validation(String),

    /// An internal invariant was broken (e.g. a thinning bound exceeded).
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, GctError>;

impl GctError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        GctError::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        GctError::Validation(msg.into())
    }
}
