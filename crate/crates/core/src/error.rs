use std::path::PathBuf;

/// Every failure the toolkit can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("zero-sized dimension")]
    ZeroDimension,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("region has {available} usable pixels, {requested} requested")]
    RegionTooSmall { requested: usize, available: usize },
    #[error("sampling field is zero everywhere inside the region")]
    DegenerateField,
    #[error("degenerate point set: {0}")]
    DegenerateInput(&'static str),
    #[error("closed curve encloses no pixel")]
    EmptyInterior,
    #[error("mask generation failed after {0} attempts")]
    GenerationFailed(usize),

    #[error("mask is empty")]
    EmptyMask,
    #[error("invalid gamma weight {0}: must be > -1")]
    InvalidWeight(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("empty input")]
    EmptyInput,

    #[error("not enough images: {requested} requested, {available} available")]
    NotEnoughImages { requested: usize, available: usize },
    #[error("both classes are required to compute {0}")]
    SingleClassInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("frozen encoder hash mismatch: expected {expected:016x}, found {found:016x}")]
    FrozenHashMismatch { expected: u64, found: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
