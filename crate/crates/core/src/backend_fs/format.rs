//! On-disk formats of the filesystem catalogue.
//!
//! The TOC and sub-TOC files are streams of framed records:
//!
//! ```text
//! u32 total length | u8 kind | payload | u32 crc32c(kind | payload)
//! ```
//!
//! TOC records never exceed [`ATOMIC_APPEND_LIMIT`] bytes so that a single
//! `O_APPEND` write lands whole. A trailing record shorter than its length
//! prefix is an append still in flight and is ignored by readers; a complete
//! record with a bad checksum is corruption.
//!
//! Index blocks are `u32 count | count × (str key, u32 uri id, u64 offset,
//! u64 length) | u32 crc32c`, keys sorted.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use fieldstore_engine::wire::{DecodeError, Decoder, Encoder};

use crate::schema::AxisSet;
use crate::{Error, Result};

pub const ATOMIC_APPEND_LIMIT: usize = 4096;

const KIND_INIT: u8 = 1;
const KIND_SUBTOC_PTR: u8 = 2;
const KIND_FULL_INDEX: u8 = 3;
const KIND_MASK: u8 = 4;
const KIND_SUBTOC_ENTRY: u8 = 5;

const FRAME_OVERHEAD: usize = 4 + 1 + 4;

/// Bijection between small integers and the uris an index refers to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UriStore {
    uris: Vec<String>,
    ids: HashMap<String, u32>,
}

impl UriStore {
    pub fn insert(&mut self, uri: &str) -> u32 {
        if let Some(id) = self.ids.get(uri) {
            return *id;
        }
        let id = self.uris.len() as u32;
        self.uris.push(uri.to_owned());
        self.ids.insert(uri.to_owned(), id);
        id
    }

    pub fn get(&self, id: u32) -> Option<&str> {
        self.uris.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, uri: &str) -> Option<u32> {
        self.ids.get(uri).copied()
    }

    pub fn len(&self) -> usize {
        self.uris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uris.is_empty()
    }

    pub fn uris(&self) -> &[String] {
        &self.uris
    }

    pub fn clear(&mut self) {
        self.uris.clear();
        self.ids.clear();
    }

    fn encode(&self, e: &mut Encoder) {
        e.u32(self.uris.len() as u32);
        for u in &self.uris {
            e.str(u);
        }
    }

    fn decode(d: &mut Decoder) -> std::result::Result<UriStore, DecodeError> {
        let mut s = UriStore::default();
        for _ in 0..d.u32()? {
            s.insert(d.str()?);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub uri_id: u32,
    pub offset: u64,
    pub length: u64,
}

/// Element key (canonical) to location, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexBlock {
    entries: BTreeMap<String, IndexEntry>,
}

impl IndexBlock {
    pub fn insert(&mut self, key: String, entry: IndexEntry) {
        self.entries.insert(key, entry);
    }

    pub fn get(&self, key: &str) -> Option<&IndexEntry> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &IndexEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u32(self.entries.len() as u32);
        for (k, v) in &self.entries {
            e.str(k).u32(v.uri_id).u64(v.offset).u64(v.length);
        }
        let crc = crc32c::crc32c(e.as_slice());
        e.u32(crc);
        e.into_inner()
    }

    pub fn decode(buf: &[u8]) -> std::result::Result<IndexBlock, String> {
        if buf.len() < 8 {
            return Err(format!("index block of {} bytes is truncated", buf.len()));
        }
        let (body, crc) = buf.split_at(buf.len() - 4);
        if crc32c::crc32c(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err("index block checksum mismatch".into());
        }
        let mut d = Decoder::new(body);
        let parse = |d: &mut Decoder| -> std::result::Result<IndexBlock, DecodeError> {
            let mut block = IndexBlock::default();
            for _ in 0..d.u32()? {
                let key = d.str()?.to_owned();
                block.insert(key, IndexEntry { uri_id: d.u32()?, offset: d.u64()?, length: d.u64()? });
            }
            Ok(block)
        };
        let block = parse(&mut d).map_err(|e| e.to_string())?;
        if !d.is_empty() {
            return Err("trailing bytes in index block".into());
        }
        Ok(block)
    }
}

/// Position of an index block within an index file (file name relative to
/// the dataset directory).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexLocation {
    pub file: String,
    pub offset: u64,
    pub length: u64,
}

/// Everything a reader needs to use one index block without opening it first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRef {
    pub collocation: String,
    pub axes: AxisSet,
    pub uris: UriStore,
    pub index: IndexLocation,
}

impl IndexRef {
    fn encode(&self, e: &mut Encoder) {
        e.str(&self.collocation);
        let dims: Vec<&str> = self.axes.dims().collect();
        e.u32(dims.len() as u32);
        for dim in dims {
            let values: Vec<&str> = self.axes.values(dim).collect();
            e.str(dim).u32(values.len() as u32);
            for v in values {
                e.str(v);
            }
        }
        self.uris.encode(e);
        e.str(&self.index.file).u64(self.index.offset).u64(self.index.length);
    }

    fn decode(d: &mut Decoder) -> std::result::Result<IndexRef, DecodeError> {
        let collocation = d.str()?.to_owned();
        let mut axes = AxisSet::new();
        for _ in 0..d.u32()? {
            let dim = d.str()?;
            for _ in 0..d.u32()? {
                axes.insert(dim, d.str()?);
            }
        }
        let uris = UriStore::decode(d)?;
        let index = IndexLocation { file: d.str()?.to_owned(), offset: d.u64()?, length: d.u64()? };
        Ok(IndexRef { collocation, axes, uris, index })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TocRecord {
    Init,
    /// A session's sub-TOC file now holds visible indexes.
    SubtocPtr { subtoc: String },
    /// A complete index written at close, replacing the partial indexes
    /// reachable through `supersedes`.
    FullIndex { supersedes: String, index: IndexRef },
    /// The named sub-TOC is superseded and must be skipped.
    Mask { subtoc: String },
}

/// One entry of a sub-TOC file, appended at every flush.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtocEntry(pub IndexRef);

fn frame(kind: u8, payload: &[u8]) -> Vec<u8> {
    let total = payload.len() + FRAME_OVERHEAD;
    let mut e = Encoder::with_capacity(total);
    e.u32(total as u32).u8(kind).raw(payload);
    let crc = crc32c::crc32c(&e.as_slice()[4..]);
    e.u32(crc);
    e.into_inner()
}

impl TocRecord {
    /// Encodes the record, refusing anything that would not append atomically.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut e = Encoder::new();
        let kind = match self {
            TocRecord::Init => KIND_INIT,
            TocRecord::SubtocPtr { subtoc } => {
                e.str(subtoc);
                KIND_SUBTOC_PTR
            }
            TocRecord::FullIndex { supersedes, index } => {
                e.str(supersedes);
                index.encode(&mut e);
                KIND_FULL_INDEX
            }
            TocRecord::Mask { subtoc } => {
                e.str(subtoc);
                KIND_MASK
            }
        };
        let rec = frame(kind, e.as_slice());
        if rec.len() > ATOMIC_APPEND_LIMIT {
            return Err(Error::RecordTooLarge { size: rec.len(), limit: ATOMIC_APPEND_LIMIT });
        }
        Ok(rec)
    }

    fn decode(kind: u8, payload: &[u8]) -> std::result::Result<TocRecord, String> {
        let mut d = Decoder::new(payload);
        let rec = (|| -> std::result::Result<TocRecord, DecodeError> {
            Ok(match kind {
                KIND_INIT => TocRecord::Init,
                KIND_SUBTOC_PTR => TocRecord::SubtocPtr { subtoc: d.str()?.to_owned() },
                KIND_FULL_INDEX => {
                    TocRecord::FullIndex { supersedes: d.str()?.to_owned(), index: IndexRef::decode(&mut d)? }
                }
                KIND_MASK => TocRecord::Mask { subtoc: d.str()?.to_owned() },
                _ => return Err(DecodeError { what: "record kind", at: 0 }),
            })
        })()
        .map_err(|e| e.to_string())?;
        if !d.is_empty() {
            return Err("trailing bytes in record".into());
        }
        Ok(rec)
    }
}

impl SubtocEntry {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.0.encode(&mut e);
        frame(KIND_SUBTOC_ENTRY, e.as_slice())
    }

    fn decode(kind: u8, payload: &[u8]) -> std::result::Result<SubtocEntry, String> {
        if kind != KIND_SUBTOC_ENTRY {
            return Err(format!("unexpected record kind {kind} in sub-TOC"));
        }
        let mut d = Decoder::new(payload);
        let r = IndexRef::decode(&mut d).map_err(|e| e.to_string())?;
        if !d.is_empty() {
            return Err("trailing bytes in record".into());
        }
        Ok(SubtocEntry(r))
    }
}

/// Splits a record stream into (kind, payload) frames, ignoring an
/// incomplete trailing frame.
fn frames<'a>(buf: &'a [u8], path: &Path) -> Result<Vec<(u8, &'a [u8])>> {
    let corrupt = |reason: String| Error::CorruptCatalogue { path: path.to_owned(), reason };
    let mut out = Vec::new();
    let mut pos = 0;
    while buf.len() - pos >= 4 {
        let total = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        if total < FRAME_OVERHEAD {
            return Err(corrupt(format!("record at offset {pos} has impossible length {total}")));
        }
        let Some(rec) = buf.get(pos..pos + total) else { break };
        let (body, crc) = rec[4..].split_at(total - 8);
        if crc32c::crc32c(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(corrupt(format!("checksum mismatch in record at offset {pos}")));
        }
        out.push((body[0], &body[1..]));
        pos += total;
    }
    Ok(out)
}

pub fn parse_toc(buf: &[u8], path: &Path) -> Result<Vec<TocRecord>> {
    frames(buf, path)?
        .into_iter()
        .map(|(kind, payload)| {
            TocRecord::decode(kind, payload)
                .map_err(|reason| Error::CorruptCatalogue { path: path.to_owned(), reason })
        })
        .collect()
}

pub fn parse_subtoc(buf: &[u8], path: &Path) -> Result<Vec<SubtocEntry>> {
    frames(buf, path)?
        .into_iter()
        .map(|(kind, payload)| {
            SubtocEntry::decode(kind, payload)
                .map_err(|reason| Error::CorruptCatalogue { path: path.to_owned(), reason })
        })
        .collect()
}
