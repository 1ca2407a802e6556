use std::sync::Arc;

use tracing::trace;

use crate::handle::{concat_handles, merge_handles, DataHandle, LocationDescriptor};
use crate::schema::{expand_request, Identifier, PartialIdentifier, Schema, SplitKey};
use crate::{Error, Result};

/// One listed field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ListEntry {
    pub identifier: Identifier,
    pub location: LocationDescriptor,
}

/// Bulk byte storage of one session.
pub trait Store: Send {
    /// Takes a copy of `data` and returns where it will be readable.
    fn archive(&mut self, key: &SplitKey, data: &[u8]) -> Result<LocationDescriptor>;

    /// Makes every archived byte durable.
    fn flush(&mut self) -> Result<()>;

    /// Lazy handle over `loc`; performs no I/O.
    fn retrieve(&self, loc: &LocationDescriptor) -> DataHandle;

    /// A handle with no segments, mergeable with this store's handles.
    fn empty_handle(&self) -> DataHandle;

    fn close(&mut self) -> Result<()>;
}

/// Index of one session.
pub trait Catalogue: Send {
    fn archive(&mut self, key: &SplitKey, loc: &LocationDescriptor) -> Result<()>;

    /// Makes every indexed field visible to other sessions.
    fn flush(&mut self) -> Result<()>;

    fn close(&mut self) -> Result<()>;

    /// Sorted values indexed for `dim` under (dataset, collocation).
    fn axis(&mut self, dataset: &Identifier, collocation: &Identifier, dim: &str) -> Result<Vec<String>>;

    /// Location of the newest visible version of `key`, if any.
    fn retrieve(&mut self, key: &SplitKey) -> Result<Option<LocationDescriptor>>;

    /// Every visible field matching `partial`, once each.
    fn list(&mut self, partial: &PartialIdentifier) -> Result<Vec<ListEntry>>;
}

/// A writer and/or reader session against one store.
///
/// Calls on one session are sequential. Independent sessions may run
/// concurrently in any threads or processes sharing the store.
pub struct Session {
    schema: Arc<Schema>,
    store: Box<dyn Store>,
    catalogue: Box<dyn Catalogue>,
    closed: bool,
}

impl Session {
    pub fn new(schema: Arc<Schema>, store: Box<dyn Store>, catalogue: Box<dyn Catalogue>) -> Session {
        Session { schema, store, catalogue, closed: false }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    fn check_open(&self) -> Result<()> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        Ok(())
    }

    /// Archives one field. Returns once the store holds its own copy.
    pub fn archive(&mut self, id: &Identifier, data: &[u8]) -> Result<()> {
        self.check_open()?;
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let key = self.schema.split(id)?;
        let loc = self.store.archive(&key, data)?;
        trace!(%id, %loc, "archived");
        self.catalogue.archive(&key, &loc)
    }

    /// Blocks until every field archived by this session is durable and visible.
    pub fn flush(&mut self) -> Result<()> {
        self.check_open()?;
        self.store.flush()?;
        self.catalogue.flush()
    }

    /// Handle over the found fields of `ids`, in query order, with adjacent
    /// locations merged. Missing fields are skipped.
    pub fn retrieve(&mut self, ids: &[Identifier]) -> Result<DataHandle> {
        let handles = self.lookup(ids)?;
        merge_handles(handles)
    }

    /// As [`retrieve`](Session::retrieve) but keeps one segment per field.
    pub fn retrieve_unmerged(&mut self, ids: &[Identifier]) -> Result<DataHandle> {
        let handles = self.lookup(ids)?;
        concat_handles(handles)
    }

    fn lookup(&mut self, ids: &[Identifier]) -> Result<Vec<DataHandle>> {
        self.check_open()?;
        let mut handles = vec![self.store.empty_handle()];
        for id in ids {
            let key = self.schema.split(id)?;
            if let Some(loc) = self.catalogue.retrieve(&key)? {
                handles.push(self.store.retrieve(&loc));
            }
        }
        Ok(handles)
    }

    /// Location of the newest visible version of `id`.
    pub fn locate(&mut self, id: &Identifier) -> Result<Option<LocationDescriptor>> {
        self.check_open()?;
        let key = self.schema.split(id)?;
        self.catalogue.retrieve(&key)
    }

    /// Expands `partial` against the indexed axes and retrieves the result.
    pub fn retrieve_partial(&mut self, partial: &PartialIdentifier) -> Result<DataHandle> {
        let ids = self.expand(partial)?;
        self.retrieve(&ids)
    }

    pub fn expand(&mut self, partial: &PartialIdentifier) -> Result<Vec<Identifier>> {
        self.check_open()?;
        let catalogue = &mut self.catalogue;
        expand_request(&self.schema, partial, |d, c, dim| catalogue.axis(d, c, dim))
    }

    pub fn axis(&mut self, dataset: &Identifier, collocation: &Identifier, dim: &str) -> Result<Vec<String>> {
        self.check_open()?;
        self.catalogue.axis(dataset, collocation, dim)
    }

    pub fn list(&mut self, partial: &PartialIdentifier) -> Result<Vec<ListEntry>> {
        self.check_open()?;
        partial.check(&self.schema)?;
        self.catalogue.list(partial)
    }

    /// Flushes, then finalises the catalogue. Visible contents are unchanged.
    pub fn close(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.flush()?;
        self.store.close()?;
        self.catalogue.close()?;
        self.closed = true;
        Ok(())
    }
}
