use crate::dictionary::DictKind;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("image dimensions {width}x{height} must be multiples of 4")]
    DimensionNotMultipleOf4 { width: usize, height: usize },

    #[error("expected {expected} channels, got {got}")]
    ChannelCount { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dictionary has {dict_rows} rows but signals have {signal_rows}")]
    DimensionMismatch { dict_rows: usize, signal_rows: usize },

    #[error("dictionary kind mismatch: expected {expected:?}, got {got:?}")]
    KindMismatch { expected: DictKind, got: DictKind },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dictionary file: {0}")]
    DictionaryFormat(String),

    #[error("non-finite value produced during {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
