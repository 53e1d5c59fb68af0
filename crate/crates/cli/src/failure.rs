//! Exit codes and the one-line error report.

use gmcf_core::Error;

/// A failed command: exit code, a short tag and a message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "invalid_input",
            message: message.into(),
        }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            kind: "internal",
            message: e.to_string(),
        }
    }

    /// `error kind=<tag> exit=<code> message="<single line>"`
    pub fn line(&self) -> String {
        let msg = self
            .message
            .replace('\\', "\\\\")
            .replace('"', "\\\"")
            .replace('\n', " ");
        format!(
            "error kind={} exit={} message=\"{msg}\"",
            self.kind, self.code
        )
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code(),
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            kind: "io",
            message: e.to_string(),
        }
    }
}
