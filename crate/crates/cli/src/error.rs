use std::fmt;

use serde::Serialize;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Usage,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Data,
            message: msg.into(),
        }
    }

    pub fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }

    /// Single-line JSON written to stderr on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl From<breathnet_core::Error> for CliError {
    fn from(e: breathnet_core::Error) -> Self {
        use breathnet_core::Error as E;
        let kind = match e {
            E::NonFinite(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub trait Context<T> {
    fn ctx(self, what: impl fmt::Display) -> Result<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn ctx(self, what: impl fmt::Display) -> Result<T> {
        self.map_err(|e| e.into().context(what))
    }
}
