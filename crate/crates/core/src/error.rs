use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by image loading, dictionary I/O, and the retrieval drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// The PGM header could not be parsed, or the file is not binary PGM (P5).
    #[error("malformed PGM header: {reason}")]
    PgmHeader { reason: String },

    /// The PGM declares a maxval other than 255.
    #[error("unsupported PGM maxval {maxval} (only 255 is accepted)")]
    PgmMaxval { maxval: u32 },

    /// The PGM pixel payload is shorter than the header promises.
    #[error("truncated PGM pixel data: expected {expected} bytes, got {got}")]
    PgmTruncated { expected: usize, got: usize },

    /// A dictionary file does not start with the SDIC magic bytes.
    #[error("bad dictionary magic {found:02x?}")]
    DictMagic { found: [u8; 4] },

    /// A dictionary file has a format version this build does not understand.
    #[error("unsupported dictionary format version {found}")]
    DictVersion { found: u16 },

    /// A dictionary file ended mid-record.
    #[error("truncated dictionary file")]
    DictTruncated,

    /// A dictionary file parsed but violates a structural invariant.
    #[error("dictionary invariant violated: {reason}")]
    DictInvariant { reason: String },

    /// An out-of-range parameter: filter size outside the 9 + 6k
    /// progression, non-positive tolerance or threshold, and the like.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no PGM images found in {0}")]
    NoImagesFound(PathBuf),

    #[error("no .sdic dictionaries found in {0}")]
    EmptyIndex(PathBuf),

    /// Every image in an index run failed to load.
    #[error("all {count} images failed to load")]
    AllImagesFailed { count: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
