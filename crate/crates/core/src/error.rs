use thiserror::Error;

/// Errors raised by the library.
///
/// `Config` covers parameter choices that make a construction meaningless
/// (a noise rate at or above one half, a non-convex potential, ...).
/// `Input` covers bad per-call data. `Spec` carries the path of the
/// offending field inside an experiment description so front ends can
/// point at it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("invalid experiment spec at `{path}`: {message}")]
    Spec { path: String, message: String },

    #[error("non-finite score {value} for expert {expert} in round {round}")]
    NonFiniteScore {
        expert: usize,
        round: usize,
        value: f64,
    },

    #[error("trace sink failed: {0}")]
    Trace(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn spec(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
