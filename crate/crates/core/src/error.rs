use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed MIDI at byte offset {offset}: {reason}")]
    MidiParse { offset: usize, reason: String },

    #[error("unsupported MIDI file: {0}")]
    MidiUnsupported(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("at rate {rate}: {source}")]
    AtRate {
        rate: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The innermost error, with rate context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtRate { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn at_rate(rate: u64) -> impl FnOnce(Error) -> Error {
        move |e| Error::AtRate {
            rate,
            source: Box::new(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
