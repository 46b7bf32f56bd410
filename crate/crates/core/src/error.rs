use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("invalid `{field}`: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("insufficient data: need {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The integrator produced a non-finite state.
    #[error("non-finite state at step {step}; last finite state {last_finite:?}")]
    BlowUp { step: u64, last_finite: Vec<f64> },

    #[error("training diverged at iteration {iteration}; last finite loss {last_loss}")]
    Divergence { iteration: u64, last_loss: f64 },

    #[error("ill-posed landscape: {0}")]
    IllPosed(String),

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }
}
