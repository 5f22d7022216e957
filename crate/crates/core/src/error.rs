use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// `p_i > 0` where `q_i = 0`.
    #[error("KL divergence is infinite: p[{index}] > 0 but q[{index}] = 0")]
    InfiniteDivergence { index: usize },

    /// All weights are zero or some weight is not finite.
    #[error("degenerate weights{}", .step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    DegenerateWeights { step: Option<usize> },

    /// A caller-side precondition (normalized set, matching method) was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("bearing undefined: target position coincides with the observer")]
    UndefinedBearing,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attach a time index to a degenerate-weights error.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::DegenerateWeights { .. } => Error::DegenerateWeights { step: Some(step) },
            other => other,
        }
    }
}
