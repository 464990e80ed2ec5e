use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad caller input: indices out of range, unnormalized marginals, unknown ids.
    #[error("input error: {0}")]
    Input(String),

    /// The network violates one or more structural or numeric invariants.
    #[error("invalid network: {0}")]
    Invalid(ValidationReport),

    #[error("cycle detected: {}", .0.join(","))]
    Cycle(Vec<String>),

    /// A table or enumeration would exceed its configured size cap.
    #[error("capacity exceeded: {what} needs {needed} entries, cap is {cap}")]
    Capacity {
        what: String,
        needed: u128,
        cap: u128,
    },

    #[error("evidence has zero probability")]
    Inconsistent,

    #[error("empty view: no nodes remain after filtering")]
    EmptyView,

    #[error("extraction error: {0}")]
    Extraction(String),

    #[error("version mismatch: expected base {expected}, found {found}")]
    Version { expected: String, found: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation in `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("parameter error: {0}")]
    Parameter(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn schema(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: msg.into(),
        }
    }
}
