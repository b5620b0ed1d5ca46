use thiserror::Error;

/// Location of a parse problem inside a tune, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: Pos, msg: String },

    #[error("semantic error at {pos}: {msg}")]
    Semantic { pos: Pos, msg: String },

    #[error("pitch out of MIDI range: {0}")]
    Range(i32),

    #[error("invalid transposition of {0} semitones (|shift| must be <= 11)")]
    InvalidShift(i32),

    #[error("melody has no sounded notes")]
    EmptyMelody,

    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty audio buffer")]
    EmptyBuffer,

    #[error("malformed table: {0}")]
    MalformedTable(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("generation failed {0} times in a row")]
    ExhaustedRetries(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Syntax {
            pos: Pos { line, col },
            msg: msg.into(),
        }
    }

    pub(crate) fn semantic(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Semantic {
            pos: Pos { line, col },
            msg: msg.into(),
        }
    }
}
