use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: out-of-range indices, mismatched shapes, bad parameters.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// The dense oracle refuses matrices larger than its configured cap.
    #[error("capacity exceeded: {what} has size {size}, limit is {limit}")]
    Capacity {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    /// Overflow, NaN, or a refinement procedure that failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dataset and file-format diagnostics. Each malformed-input class gets its own variant.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: cannot parse {what}: {text:?}")]
    Parse {
        file: PathBuf,
        line: usize,
        what: &'static str,
        text: String,
    },

    #[error("{file}:{line}: ragged feature row, expected {expected} columns, found {found}")]
    RaggedFeatures {
        file: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{file}:{line}: node id {id} out of range for {num_nodes} nodes")]
    IndexOutOfRange {
        file: PathBuf,
        line: usize,
        id: usize,
        num_nodes: usize,
    },

    #[error("{file}:{line}: label {label} out of range (must be in 0..{limit})")]
    LabelOutOfRange {
        file: PathBuf,
        line: usize,
        label: i64,
        limit: usize,
    },

    #[error("{file}: node {node} has no label")]
    MissingLabel { file: PathBuf, node: usize },

    #[error("{file}:{line}: node {node} listed in split '{second}' but already in '{first}'")]
    OverlappingSplits {
        file: PathBuf,
        line: usize,
        node: usize,
        first: String,
        second: String,
    },

    #[error("inconsistent node count: {first} has {first_n} nodes, {second} has {second_n}")]
    InconsistentNodeCount {
        first: PathBuf,
        first_n: usize,
        second: PathBuf,
        second_n: usize,
    },

    #[error("{0}: manifest lists no samples")]
    EmptyManifest(PathBuf),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn dims<T>(
    context: &'static str,
    expected: impl ToString,
    found: impl ToString,
) -> Result<T> {
    Err(Error::Dimension {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    })
}
