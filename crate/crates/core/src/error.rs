use std::fmt;

use crate::value::ValueKind;

/// 1-based position of a token in query text, plus its byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Position {
    pub line: usize,
    pub column: usize,
    #[serde(skip)]
    pub offset: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub position: Position,
    /// Offending token text, empty at end of input.
    pub token: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.token.is_empty() {
            write!(f, "{} at {} (end of input)", self.message, self.position)
        } else {
            write!(f, "{} at {} near `{}`", self.message, self.position, self.token)
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("plan error: {0}")]
    Plan(String),
    #[error("object already exists: {0}")]
    DuplicateObject(String),
    #[error("no such object: {0}")]
    NoSuchObject(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("cannot coerce {value} to {target}")]
    Coerce { value: String, target: ValueKind },
    #[error("coordinate out of bounds: {0}")]
    CoordOutOfBounds(String),
    #[error("invalid range: start {start:?} is after end {end:?}")]
    InvalidRange { start: String, end: String },
    #[error("engine unavailable: {engine}")]
    EngineUnavailable { engine: String },
    #[error("no such engine: {0}")]
    NoSuchEngine(String),
    #[error("island/kind mismatch: {0}")]
    IslandKindMismatch(String),
    #[error("no engine is up for island {island}{}", down_note(.engine))]
    NoUpEngineForIsland { island: String, engine: Option<String> },
    #[error("config error: {0}")]
    Config(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("mapping spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("duplicate coordinate {0}")]
    DuplicateCoordinate(String),
    #[error("null coordinate in column {0}")]
    NullCoordinate(String),
    #[error("engine kind mismatch: {0}")]
    KindMismatch(String),
    #[error("invalid snapshot {file}: {reason}")]
    Snapshot { file: String, reason: String },
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// The error with any step annotation removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn step(&self) -> Option<usize> {
        match self {
            Error::AtStep { step, .. } => Some(*step),
            _ => None,
        }
    }

    pub(crate) fn unavailable(engine: &str) -> Error {
        Error::EngineUnavailable {
            engine: engine.to_string(),
        }
    }
}

fn down_note(engine: &Option<String>) -> String {
    engine.as_ref().map(|e| format!(" ({e} is down)")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, Error>;
