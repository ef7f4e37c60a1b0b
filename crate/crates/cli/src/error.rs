use std::fmt;

use serde::Serialize;
use trendgp::{Assumption, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Io,
    Parse,
    Fit,
    Assumption,
    Network,
    Schema,
}

impl Failure {
    pub fn exit_code(self) -> u8 {
        match self {
            Failure::Io => 1,
            Failure::Parse => 2,
            Failure::Fit => 3,
            Failure::Assumption => 4,
            Failure::Network => 5,
            Failure::Schema => 6,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub assumption: Option<Assumption>,
    /// Expected input column that was absent.
    pub column: Option<String>,
    pub message: String,
}

impl CliError {
    fn new(kind: Failure, message: impl Into<String>) -> Self {
        CliError {
            kind,
            assumption: None,
            column: None,
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        CliError::new(Failure::Parse, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError::new(Failure::Io, message)
    }

    pub fn network(message: impl Into<String>) -> Self {
        CliError::new(Failure::Network, message)
    }

    pub fn missing_column(column: &str) -> Self {
        CliError {
            column: Some(column.to_string()),
            ..CliError::new(Failure::Schema, format!("expected column `{column}` is absent"))
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.kind.exit_code()
    }

    /// Single-line JSON object for stderr.
    pub fn one_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: Failure,
            exit_code: u8,
            #[serde(skip_serializing_if = "Option::is_none")]
            assumption: Option<Assumption>,
            #[serde(skip_serializing_if = "Option::is_none")]
            column: Option<&'a str>,
            reason: &'a str,
        }
        serde_json::to_string(&Line {
            error: self.kind,
            exit_code: self.exit_code(),
            assumption: self.assumption,
            column: self.column.as_deref(),
            reason: &self.message,
        })
        .unwrap_or_else(|_| format!("{{\"error\":\"io\",\"reason\":{:?}}}", self.message))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        if let Some(a) = e.violated_assumption() {
            return CliError {
                assumption: Some(a),
                ..CliError::new(Failure::Assumption, message)
            };
        }
        let kind = match e {
            Error::InvalidParameter(_) | Error::InvalidData(_) | Error::Domain { .. } | Error::LengthMismatch { .. } => {
                Failure::Parse
            }
            _ => Failure::Fit,
        };
        CliError::new(kind, message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;
    use trendgp::KernelFamily;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        let a3: CliError = Error::InadmissibleOrder {
            family: KernelFamily::Matern32,
            order_s: 2,
            order_t: 2,
        }
        .into();
        assert_eq!(a3.exit_code(), 4);
        assert!(a3.one_line().contains("\"assumption\":\"A3\""));
        assert_eq!(CliError::from(Error::InvalidData("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::FitFailed("x".into())).exit_code(), 3);
        let drift = CliError::missing_column("nuovi_positivi");
        assert_eq!(drift.exit_code(), 6);
        assert!(!drift.one_line().contains('\n'));
        assert!(drift.one_line().contains("\"column\":\"nuovi_positivi\""));
    }
}
