use std::fmt;

use hermann_core::{Error, ErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliErrorKind {
    UnknownTriad,
    MalformedTriad,
    SingularPoint,
    InvalidInput,
    Numeric,
    Io,
}

impl CliErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CliErrorKind::UnknownTriad => "unknown_triad",
            CliErrorKind::MalformedTriad => "malformed_triad_json",
            CliErrorKind::SingularPoint => "singular_point",
            CliErrorKind::InvalidInput => "invalid_input",
            CliErrorKind::Numeric => "numeric_degeneracy",
            CliErrorKind::Io => "io",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: CliErrorKind,
    pub message: String,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

impl CliError {
    pub fn new(kind: CliErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(CliErrorKind::InvalidInput, message)
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            CliErrorKind::Numeric => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match (&e, e.kind()) {
            (
                Error::SingularPoint(_) | Error::FocalPoint { .. } | Error::ChamberCrossing { .. },
                _,
            ) => CliErrorKind::SingularPoint,
            (_, ErrorKind::Input) => CliErrorKind::InvalidInput,
            (_, ErrorKind::Numeric) => CliErrorKind::Numeric,
        };
        Self::new(kind, e.to_string())
    }
}
