use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("rate integration failed for b={b}, k={k}: {reason}")]
    RateIntegration { b: usize, k: usize, reason: String },

    #[error("dust classification inconclusive for custom density (tail ratio {ratio:.4}); supply mu_minus1 manually")]
    DustInconclusive { ratio: f64 },

    #[error("degenerate spectrum: lambda_{r} and lambda_{s} coincide")]
    DegenerateSpectrum { r: usize, s: usize },

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("unsupported measure for growth moments: {0}")]
    UnsupportedGrowthMeasure(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("state space too large: n={0} exceeds the oracle cap of 7")]
    StateSpaceTooLarge(usize),

    #[error("singular linear system in exact oracle")]
    SingularSystem,

    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
