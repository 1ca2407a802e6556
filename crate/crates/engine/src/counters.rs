use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{ObjectId, WriterTag};

/// Operation kinds tracked by [`EngineOpCounters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    KvPut,
    KvGet,
    KvList,
    BlobWrite,
    BlobRead,
    NsCreate,
    IdAlloc,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::KvPut => "kv_put",
            OpKind::KvGet => "kv_get",
            OpKind::KvList => "kv_list",
            OpKind::BlobWrite => "blob_write",
            OpKind::BlobRead => "blob_read",
            OpKind::NsCreate => "ns_create",
            OpKind::IdAlloc => "id_alloc",
        }
    }
}

/// Per-operation counts plus, for every key-value that received a put, the
/// number of puts and the set of writer tags that issued them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineOpCounters {
    pub kv_put: u64,
    pub kv_get: u64,
    pub kv_list: u64,
    pub blob_write: u64,
    pub blob_read: u64,
    pub ns_create: u64,
    pub id_alloc: u64,
    /// `"<namespace>/<kv id>"` to writer tags.
    pub kv_writers: BTreeMap<String, BTreeSet<WriterTag>>,
    /// `"<namespace>/<kv id>"` to number of puts.
    pub kv_puts: BTreeMap<String, u64>,
}

impl EngineOpCounters {
    pub const COLUMNS: [&'static str; 7] =
        ["kv_put", "kv_get", "kv_list", "blob_write", "blob_read", "ns_create", "id_alloc"];

    pub(crate) fn bump(&mut self, op: OpKind) {
        *self.slot(op) += 1;
    }

    pub(crate) fn record_put(&mut self, ns: &str, kv: ObjectId, writer: WriterTag) {
        let label = kv_label(ns, kv);
        *self.kv_puts.entry(label.clone()).or_default() += 1;
        self.kv_writers.entry(label).or_default().insert(writer);
    }

    fn slot(&mut self, op: OpKind) -> &mut u64 {
        match op {
            OpKind::KvPut => &mut self.kv_put,
            OpKind::KvGet => &mut self.kv_get,
            OpKind::KvList => &mut self.kv_list,
            OpKind::BlobWrite => &mut self.blob_write,
            OpKind::BlobRead => &mut self.blob_read,
            OpKind::NsCreate => &mut self.ns_create,
            OpKind::IdAlloc => &mut self.id_alloc,
        }
    }

    pub fn get(&self, op: OpKind) -> u64 {
        match op {
            OpKind::KvPut => self.kv_put,
            OpKind::KvGet => self.kv_get,
            OpKind::KvList => self.kv_list,
            OpKind::BlobWrite => self.blob_write,
            OpKind::BlobRead => self.blob_read,
            OpKind::NsCreate => self.ns_create,
            OpKind::IdAlloc => self.id_alloc,
        }
    }

    /// Counts in [`Self::COLUMNS`] order.
    pub fn as_row(&self) -> [u64; 7] {
        [
            self.kv_put,
            self.kv_get,
            self.kv_list,
            self.blob_write,
            self.blob_read,
            self.ns_create,
            self.id_alloc,
        ]
    }

    pub fn total_ops(&self) -> u64 {
        self.as_row().iter().sum()
    }

    /// Operations performed between `earlier` and `self`. Writer tags are
    /// reported as seen in `self`.
    pub fn since(&self, earlier: &EngineOpCounters) -> EngineOpCounters {
        EngineOpCounters {
            kv_put: self.kv_put - earlier.kv_put,
            kv_get: self.kv_get - earlier.kv_get,
            kv_list: self.kv_list - earlier.kv_list,
            blob_write: self.blob_write - earlier.blob_write,
            blob_read: self.blob_read - earlier.blob_read,
            ns_create: self.ns_create - earlier.ns_create,
            id_alloc: self.id_alloc - earlier.id_alloc,
            kv_writers: self.kv_writers.clone(),
            kv_puts: self
                .kv_puts
                .iter()
                .map(|(k, n)| (k.clone(), n - earlier.kv_puts.get(k).copied().unwrap_or(0)))
                .filter(|(_, n)| *n > 0)
                .collect(),
        }
    }

    /// Adds the counts of `other` (writer tags are unioned).
    pub fn accumulate(&mut self, other: &EngineOpCounters) {
        self.kv_put += other.kv_put;
        self.kv_get += other.kv_get;
        self.kv_list += other.kv_list;
        self.blob_write += other.blob_write;
        self.blob_read += other.blob_read;
        self.ns_create += other.ns_create;
        self.id_alloc += other.id_alloc;
        for (k, v) in &other.kv_writers {
            self.kv_writers.entry(k.clone()).or_default().extend(v);
        }
        for (k, n) in &other.kv_puts {
            *self.kv_puts.entry(k.clone()).or_default() += n;
        }
    }

    pub fn writers_of(&self, ns: &str, kv: ObjectId) -> BTreeSet<WriterTag> {
        self.kv_writers.get(&kv_label(ns, kv)).cloned().unwrap_or_default()
    }

    pub fn puts_to(&self, ns: &str, kv: ObjectId) -> u64 {
        self.kv_puts.get(&kv_label(ns, kv)).copied().unwrap_or(0)
    }
}

pub(crate) fn kv_label(ns: &str, kv: ObjectId) -> String {
    format!("{ns}/{kv}")
}
