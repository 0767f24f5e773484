use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A record-oriented file could not be decoded. `record` is the 0-based
    /// index of the offending record, counting the header as record 0.
    #[error("format error in record {record}: {message}")]
    Format { record: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("version error: {0}")]
    Version(String),

    #[error("{0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
