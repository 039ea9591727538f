//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("{0}: non-finite value encountered")]
    NonFinite(&'static str),

    #[error("{context}: dimension mismatch (expected {expected}, got {got})")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0}: zero vector has no direction")]
    ZeroVector(&'static str),

    #[error("mask size mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    MaskSizeMismatch {
        a_w: u32,
        a_h: u32,
        b_w: u32,
        b_h: u32,
    },

    #[error("{0}: mask has no foreground pixels")]
    EmptyMask(&'static str),

    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),

    #[error("{context}: tape does not match parameters ({detail})")]
    StaleTape {
        context: &'static str,
        detail: String,
    },

    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{file}: malformed data at offset {offset}: {reason}")]
    Malformed {
        file: String,
        offset: u64,
        reason: String,
    },

    #[error(
        "{file}: checksum mismatch at offset {offset} (stored {stored:#010x}, computed {computed:#010x})"
    )]
    ChecksumMismatch {
        file: String,
        offset: u64,
        stored: u32,
        computed: u32,
    },

    #[error("{file}: unsupported format version {found} (reader supports {supported})")]
    VersionMismatch {
        file: String,
        found: u32,
        supported: u32,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
