use amor_core::AmorError;
use serde_json::json;

/// Failure category, which fixes the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Numerical => "numerical",
            ErrorKind::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}: {message}", kind.as_str())]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// Core error it came from, if any.
    pub source_error: Option<AmorError>,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, message: message.into(), source_error: None }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Io, message: message.into(), source_error: None }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let mut err = json!({
            "kind": self.kind.as_str(),
            "exit_code": self.exit_code(),
            "message": self.message,
        });
        if let Some(AmorError::Config { field, value, reason }) = &self.source_error {
            err["field"] = json!(field);
            err["value"] = json!(value);
            err["reason"] = json!(reason);
        }
        if let Some(AmorError::Parse { line, .. }) = &self.source_error {
            err["line"] = json!(line);
        }
        json!({ "error": err }).to_string()
    }
}

impl From<AmorError> for CliError {
    fn from(e: AmorError) -> Self {
        let kind = match &e {
            AmorError::Config { .. }
            | AmorError::Parse { .. }
            | AmorError::InvalidInput(_)
            | AmorError::Nyquist { .. }
            | AmorError::TooShort(_)
            | AmorError::OutOfSpan(_) => ErrorKind::Config,
            AmorError::NonConvergence { .. } | AmorError::Degenerate(_) => ErrorKind::Numerical,
            AmorError::Io(_) => ErrorKind::Io,
        };
        CliError { kind, message: e.to_string(), source_error: Some(e) }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
