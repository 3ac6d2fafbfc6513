use thiserror::Error;

/// Errors raised anywhere in the signal chain.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmorError {
    /// A configuration field violates its invariant.
    #[error("{field} = {value}: {reason}")]
    Config {
        field: String,
        value: String,
        reason: String,
    },

    /// Malformed configuration text.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Requested frequency at or above the allowed fraction of the sample rate.
    #[error("frequency {freq} Hz violates the sampling guard for sample rate {sample_rate} Hz")]
    Nyquist { freq: f64, sample_rate: f64 },

    /// Record too short for the requested bandwidth or resolution.
    #[error("series too short: {0}")]
    TooShort(String),

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// A frequency or window lies outside the spectrum span.
    #[error("out of span: {0}")]
    OutOfSpan(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl AmorError {
    pub(crate) fn config(field: &str, value: impl ToString, reason: &str) -> Self {
        AmorError::Config {
            field: field.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        }
    }
}

impl From<std::io::Error> for AmorError {
    fn from(e: std::io::Error) -> Self {
        AmorError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AmorError>;
