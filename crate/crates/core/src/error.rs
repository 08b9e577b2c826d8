use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range 1..={len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative value {value} at pixel {pixel}, channel {channel}")]
    NegativeValue {
        pixel: usize,
        channel: usize,
        value: f64,
    },

    #[error("degenerate margin: {0}")]
    DegenerateMargin(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("no markers to flood from")]
    NoMarkers,

    #[error("relief has {found} minima, {requested} regions requested")]
    TooFewMinima { found: usize, requested: usize },

    #[error("no eligible component for germs")]
    EmptyMarkers,

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParameter(_))
    }
}
