//! Embedded, strongly consistent key-value and blob engine.
//!
//! The engine stores data in named namespaces. Each namespace holds any number
//! of key-value objects and blobs, both addressed by a 128-bit [`ObjectId`].
//! Every operation is atomic on its own: a put or a blob write is durable
//! before it returns (in durable mode), and a concurrent reader observes either
//! the former or the latter value, never a mix of both.
//!
//! Two front ends implement [`ObjectEngine`]:
//!
//! - [`Engine`], the in-process engine, either in memory or backed by a data
//!   directory.
//! - [`RemoteEngine`], a client for an [`EngineServer`] exposing one engine
//!   over a local socket, so that several OS processes can share a data
//!   directory.
//!
//! Data directory layout (durable mode):
//!
//! ```text
//! <dir>/LOCK                      exclusive lock held by the owning process
//! <dir>/ns/<digest>/NAME          namespace name
//! <dir>/ns/<digest>/kv.log        append-only log of key-value puts and id cursor moves
//! <dir>/ns/<digest>/blobs/<id>    one file per blob, replaced atomically by rename
//! ```

mod counters;
mod error;
mod fault;
mod id;
mod local;
mod log;
pub mod protocol;
mod remote;
mod server;
pub mod wire;

pub use counters::{EngineOpCounters, OpKind};
pub use error::{EngineError, Result};
pub use fault::{FaultContext, FaultHook};
pub use id::{IdRange, ObjectId};
pub use local::{Engine, EngineMode};
pub use remote::RemoteEngine;
pub use server::EngineServer;

/// Identifies the session issuing a mutation, for per-object writer accounting.
pub type WriterTag = u64;

/// Largest value accepted by [`ObjectEngine::kv_put`].
pub const MAX_VALUE_SIZE: usize = 16 << 20;

/// Operations offered by a key-value and blob engine.
///
/// Key-value objects need no creation: a key-value that was never written
/// behaves as an empty map. Namespaces must be created before use.
pub trait ObjectEngine: Send + Sync {
    /// Creates `ns` unless it exists. Exactly one of any set of concurrent
    /// callers observes `true`.
    fn ns_create_if_absent(&self, ns: &str) -> Result<bool>;

    fn ns_exists(&self, ns: &str) -> Result<bool>;

    fn kv_put(&self, writer: WriterTag, ns: &str, kv: ObjectId, key: &str, value: &[u8]) -> Result<()>;

    fn kv_get(&self, ns: &str, kv: ObjectId, key: &str) -> Result<Option<Vec<u8>>>;

    /// Point-in-time snapshot of the keys of `kv`, sorted.
    fn kv_list(&self, ns: &str, kv: ObjectId) -> Result<Vec<String>>;

    /// Writes (or atomically replaces) the whole content of blob `id`.
    fn blob_write(&self, ns: &str, id: ObjectId, bytes: &[u8]) -> Result<()>;

    /// Reads exactly `len` bytes starting at `offset`.
    fn blob_read(&self, ns: &str, id: ObjectId, offset: u64, len: u64) -> Result<Vec<u8>>;

    /// Reserves `n` ids in `ns`. Ranges never overlap, including across restarts.
    fn allocate_ids(&self, ns: &str, n: u64) -> Result<IdRange>;

    fn counters_snapshot(&self) -> Result<EngineOpCounters>;

    fn reset_counters(&self) -> Result<()>;
}
