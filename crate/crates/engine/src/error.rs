use std::path::PathBuf;

use thiserror::Error;

use crate::ObjectId;

pub type Result<T> = std::result::Result<T, EngineError>;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("namespace `{0}` does not exist")]
    UnknownNamespace(String),

    #[error("value of {size} bytes exceeds the {limit} byte limit")]
    ValueTooLarge { size: usize, limit: usize },

    #[error("blob {id} does not exist in namespace `{ns}`")]
    BlobNotFound { ns: String, id: ObjectId },

    #[error("range {offset}+{len} is outside blob {id} of {size} bytes")]
    OutOfRange { id: ObjectId, offset: u64, len: u64, size: u64 },

    #[error("cannot allocate zero ids")]
    ZeroAllocation,

    #[error("id space of namespace `{0}` is exhausted")]
    IdSpaceExhausted(String),

    #[error("injected fault on {0}")]
    InjectedFault(String),

    #[error("data directory {0} is in use by another process")]
    Locked(PathBuf),

    #[error("corrupt engine state in {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("remote engine: {0}")]
    Remote(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
