//! Error type of the command-line tool and its exit codes.

use std::fmt;

/// Failure classes with stable process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid flags or configuration (exit 2).
    Config(String),
    /// Reading or writing files failed (exit 3).
    Io(String),
    /// Tensor or model dimensions do not fit together (exit 4).
    Shape(String),
    /// A required checkpoint or dataset is absent (exit 5).
    Missing(String),
    /// Anything else (exit 1).
    Other(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Shape(_) => 4,
            CliError::Missing(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Shape(m) => write!(f, "shape error: {m}"),
            CliError::Missing(m) => write!(f, "missing artifact: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<csi_mtl::Error> for CliError {
    fn from(e: csi_mtl::Error) -> Self {
        use csi_mtl::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidArgument(_) | E::Incompatible(_) => CliError::Config(msg),
            E::ShapeMismatch(_) => CliError::Shape(msg),
            E::MissingArtifact(_) => CliError::Missing(msg),
            E::Io(_) | E::CorruptHeader(_) | E::TruncatedPayload { .. } | E::Csv(_) => CliError::Io(msg),
            E::Json(_) => CliError::Io(msg),
            E::Data(_) => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
