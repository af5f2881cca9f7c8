use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    #[error("packing factor {q} does not divide c_in = {c_in}")]
    PackingMismatch { q: u64, c_in: u64 },

    /// `from` and `to` are 1-based layer numbers.
    #[error("chain mismatch between layers {from}->{to}: {detail}")]
    ChainMismatch {
        from: usize,
        to: usize,
        detail: String,
    },

    #[error("network has no layers")]
    EmptyNetwork,

    #[error(
        "layer needs {work} oracle steps, above the cap of {cap}; \
         use the closed-form `plan` path for layers this large"
    )]
    SizeLimit { work: u64, cap: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A write hit an arena word that was still live. `layer` is 0-based.
    #[error("clobber in layer {}: block {block} wrote arena word {address} ({what})", .layer + 1)]
    Clobber {
        layer: usize,
        block: u64,
        address: u64,
        what: String,
    },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}
