use std::path::PathBuf;

use fieldstore_engine::EngineError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema line {line}: {msg}")]
    SchemaSyntax { line: usize, msg: String },
    #[error("keyword `{0}` appears more than once in the schema")]
    DuplicateKeyword(String),
    #[error("schema section `{0}` is empty or missing")]
    EmptySection(&'static str),
    #[error("identifier is missing dimension `{0}`")]
    MissingDimension(String),
    #[error("keyword `{0}` is not declared by the schema")]
    UnknownKeyword(String),
    #[error("invalid identifier: {0}")]
    InvalidIdentifier(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot archive an empty field")]
    EmptyData,
    #[error("cannot merge handles of backends `{0}` and `{1}`")]
    MixedBackends(String, String),
    #[error("corrupt catalogue {path}: {reason}")]
    CorruptCatalogue { path: PathBuf, reason: String },
    #[error("record of {size} bytes exceeds the {limit} byte atomic append limit")]
    RecordTooLarge { size: usize, limit: usize },
    #[error("dataset {0} was initialised with a different schema")]
    SchemaMismatch(PathBuf),
    #[error("config: {0}")]
    Config(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("short read on {uri}: wanted {wanted} bytes at offset {offset}")]
    ShortRead { uri: String, offset: u64, wanted: u64 },
    #[error("unresolvable location `{0}`")]
    BadLocation(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
