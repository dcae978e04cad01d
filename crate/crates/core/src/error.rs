use std::path::PathBuf;

use thiserror::Error;

use crate::factor_graph::Key;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable {0} already present")]
    DuplicateKey(Key),

    #[error("variable {0} referenced by a factor is missing")]
    MissingKey(Key),

    #[error("variable {key} has the wrong type (expected {expected})")]
    VariableType { key: Key, expected: &'static str },

    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("linear system is gauge deficient (numerical nullspace dimension {nullspace_dim})")]
    GaugeDeficient { nullspace_dim: usize },

    #[error("linear system is singular at variable block {0}")]
    Singular(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("robot model: {0}")]
    Model(String),

    #[error("joint cycle detected at joint `{0}`")]
    JointCycle(String),

    #[error("missing joint angle for `{0}`")]
    MissingJointAngle(String),

    #[error("empty contact stream")]
    EmptyContacts,

    #[error("foot target unreachable for leg {leg} at t={t:.4} s")]
    Unreachable { leg: usize, t: f64 },

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("empty log")]
    EmptyLog,

    #[error("no foot contacts anywhere in the log")]
    NoContacts,

    #[error("parse error in {source_name} line {line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(source_name: impl Into<String>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
