//! Object store for scientific fields addressed by metadata.
//!
//! Fields are archived under an [`Identifier`] made of keyword/value pairs.
//! A [`Schema`] splits each identifier into dataset, collocation and element
//! keys; the backends group storage by dataset and collocation and index by
//! element. Two backends are provided: [`backend_fs`] keeps everything in
//! files under a root directory, [`backend_obj`] keeps it in the namespaces
//! of an object engine.
//!
//! ```no_run
//! use fieldstore::{FieldStore, Identifier, Schema};
//!
//! let schema = Schema::parse("dataset: class, date\ncollocation: type\nelement: step\n")?;
//! let store = FieldStore::fs("/tmp/fields", schema)?;
//! let mut session = store.session();
//! let id: Identifier = "class=od,date=20231201,type=fc,step=1".parse()?;
//! session.archive(&id, b"payload")?;
//! session.flush()?;
//! let bytes = session.retrieve(std::slice::from_ref(&id))?.read()?;
//! assert_eq!(bytes, b"payload");
//! # Ok::<(), fieldstore::Error>(())
//! ```

pub mod backend_fs;
pub mod backend_obj;
mod config;
mod error;
mod handle;
mod schema;
mod session;

pub use config::{socket_path, BackendKind, Config, EngineAccess, FieldStore};
pub use error::{Error, Result};
pub use handle::{
    concat_handles, merge_handles, DataHandle, IoCounters, IoSnapshot, LocationDescriptor, SegmentSource,
};
pub use schema::{
    expand_request, split_identifier, AxisSet, Identifier, Level, PartialIdentifier, Schema, Selector, SplitKey,
};
pub use session::{Catalogue, ListEntry, Session, Store};
