//! Object backend over a key-value and blob engine.
//!
//! ```text
//! namespace "root"
//!   kv 0                      dataset key -> "<dataset ns>/<id of dataset kv>"
//! namespace <dataset key>
//!   kv 0 (dataset kv)         "key" -> dataset key, "schema" -> schema text,
//!                             collocation key -> "<ns>/<id of index kv>"
//!   kv digest(colloc)         "key" -> collocation key, "axes" -> element dims,
//!                             element key -> "uri\noffset\nlength"
//!   kv digest(colloc, dim)    one key per indexed value, each mapped to "1"
//!   blob <allocated id>       bytes of one archived field
//! ```
//!
//! Every field is written to a fresh blob before anything refers to it, and
//! the index entry is the last put of an archive. A field is therefore
//! visible as soon as archive returns, and flush and close have nothing to do.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use fieldstore_engine::{ObjectEngine, ObjectId, WriterTag};
use tracing::debug;

use crate::handle::{DataHandle, LocationDescriptor, SegmentSource};
use crate::schema::{AxisSet, Identifier, Level, PartialIdentifier, Schema, SplitKey};
use crate::session::{Catalogue, ListEntry, Store};
use crate::{Error, Result};

pub const BACKEND_TAG: &str = "obj";
pub const ROOT_NAMESPACE: &str = "root";
/// Ids reserved per allocation round trip.
pub const ID_BATCH: u64 = 1024;

const KEY: &str = "key";
const SCHEMA: &str = "schema";
const AXES: &str = "axes";

pub fn object_uri(ns: &str, id: ObjectId) -> String {
    format!("{ns}/{id}")
}

pub fn parse_object_uri(uri: &str) -> Result<(&str, ObjectId)> {
    let (ns, id) = uri.rsplit_once('/').ok_or_else(|| Error::BadLocation(uri.to_owned()))?;
    let id = id.parse().map_err(|_| Error::BadLocation(uri.to_owned()))?;
    Ok((ns, id))
}

pub fn index_kv(collocation: &str) -> ObjectId {
    ObjectId::digest(&[collocation])
}

pub fn axis_kv(collocation: &str, dim: &str) -> ObjectId {
    ObjectId::digest(&[collocation, dim])
}

pub fn encode_descriptor(loc: &LocationDescriptor) -> String {
    format!("{}\n{}\n{}", loc.uri, loc.offset, loc.length)
}

pub fn decode_descriptor(bytes: &[u8]) -> Result<LocationDescriptor> {
    let bad = || Error::BadLocation(String::from_utf8_lossy(bytes).into_owned());
    let text = std::str::from_utf8(bytes).map_err(|_| bad())?;
    let mut parts = text.split('\n');
    let (Some(uri), Some(off), Some(len), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(bad());
    };
    Ok(LocationDescriptor::new(uri, off.parse().map_err(|_| bad())?, len.parse().map_err(|_| bad())?))
}

fn utf8(bytes: Vec<u8>, what: &str) -> Result<String> {
    String::from_utf8(bytes).map_err(|_| Error::BadLocation(format!("non UTF-8 {what}")))
}

pub(crate) struct ObjReader {
    engine: Arc<dyn ObjectEngine>,
}

impl SegmentSource for ObjReader {
    fn read_ranges(&self, uri: &str, ranges: &[(u64, u64)], out: &mut Vec<u8>) -> Result<()> {
        let (ns, id) = parse_object_uri(uri)?;
        for &(offset, length) in ranges {
            out.extend(self.engine.blob_read(ns, id, offset, length)?);
        }
        Ok(())
    }
}

/// One blob per archived field, ids drawn from pre-allocated batches.
pub struct ObjStore {
    engine: Arc<dyn ObjectEngine>,
    reader: Arc<ObjReader>,
    /// Per namespace: next unused id and end of the current batch.
    ids: HashMap<String, (u128, u128)>,
}

impl ObjStore {
    pub fn new(engine: Arc<dyn ObjectEngine>) -> ObjStore {
        let reader = Arc::new(ObjReader { engine: engine.clone() });
        ObjStore { engine, reader, ids: HashMap::new() }
    }

    fn next_id(&mut self, ns: &str) -> Result<ObjectId> {
        match self.ids.get_mut(ns) {
            Some((next, end)) if *next < *end => {
                *next += 1;
                return Ok(ObjectId(*next - 1));
            }
            Some(_) => {}
            None => {
                self.engine.ns_create_if_absent(ns)?;
            }
        }
        let r = self.engine.allocate_ids(ns, ID_BATCH)?;
        self.ids.insert(ns.to_owned(), (r.start + 1, r.end()));
        Ok(ObjectId(r.start))
    }
}

impl Store for ObjStore {
    fn archive(&mut self, key: &SplitKey, data: &[u8]) -> Result<LocationDescriptor> {
        let ns = key.dataset.canonical();
        let id = self.next_id(&ns)?;
        self.engine.blob_write(&ns, id, data)?;
        Ok(LocationDescriptor::new(object_uri(&ns, id), 0, data.len() as u64))
    }

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }

    fn retrieve(&self, loc: &LocationDescriptor) -> DataHandle {
        DataHandle::new(BACKEND_TAG, vec![loc.clone()], self.reader.clone())
    }

    fn empty_handle(&self) -> DataHandle {
        DataHandle::new(BACKEND_TAG, Vec::new(), self.reader.clone())
    }

    fn close(&mut self) -> Result<()> {
        Ok(())
    }
}

struct ObjView {
    index: ObjectId,
    axes: AxisSet,
}

/// Index hierarchy of key-values, with per-session caches of what this
/// session already wrote and of preloaded axes.
pub struct ObjCatalogue {
    engine: Arc<dyn ObjectEngine>,
    schema: Arc<Schema>,
    writer: WriterTag,
    datasets: HashSet<String>,
    collocations: HashSet<(String, String)>,
    axis_values: HashSet<(String, String, String, String)>,
    views: HashMap<(String, String), Option<ObjView>>,
}

impl ObjCatalogue {
    pub fn new(engine: Arc<dyn ObjectEngine>, schema: Arc<Schema>, writer: WriterTag) -> ObjCatalogue {
        ObjCatalogue {
            engine,
            schema,
            writer,
            datasets: HashSet::new(),
            collocations: HashSet::new(),
            axis_values: HashSet::new(),
            views: HashMap::new(),
        }
    }

    fn put(&self, ns: &str, kv: ObjectId, key: &str, value: &str) -> Result<()> {
        Ok(self.engine.kv_put(self.writer, ns, kv, key, value.as_bytes())?)
    }

    fn ensure_dataset(&mut self, ds: &str) -> Result<()> {
        if self.datasets.contains(ds) {
            return Ok(());
        }
        self.engine.ns_create_if_absent(ROOT_NAMESPACE)?;
        self.engine.ns_create_if_absent(ds)?;
        // racing writers put identical values here
        self.put(ds, ObjectId::ZERO, KEY, ds)?;
        self.put(ds, ObjectId::ZERO, SCHEMA, &self.schema.to_text())?;
        self.put(ROOT_NAMESPACE, ObjectId::ZERO, ds, &object_uri(ds, ObjectId::ZERO))?;
        self.datasets.insert(ds.to_owned());
        Ok(())
    }

    fn ensure_collocation(&mut self, ds: &str, colloc: &str) -> Result<ObjectId> {
        let index = index_kv(colloc);
        let key = (ds.to_owned(), colloc.to_owned());
        if self.collocations.contains(&key) {
            return Ok(index);
        }
        self.put(ds, index, KEY, colloc)?;
        self.put(ds, index, AXES, &self.schema.element_dims().join(","))?;
        self.put(ds, ObjectId::ZERO, colloc, &object_uri(ds, index))?;
        self.collocations.insert(key);
        Ok(index)
    }

    fn view(&mut self, dataset: &Identifier, collocation: &Identifier) -> Result<Option<&ObjView>> {
        let key = (dataset.canonical(), collocation.canonical());
        if !self.views.contains_key(&key) {
            let view = self.preload(&key.0, &key.1)?;
            self.views.insert(key.clone(), view);
        }
        Ok(self.views[&key].as_ref())
    }

    fn preload(&self, ds: &str, colloc: &str) -> Result<Option<ObjView>> {
        if !self.engine.ns_exists(ds)? {
            return Ok(None);
        }
        let Some(uri) = self.engine.kv_get(ds, ObjectId::ZERO, colloc)? else { return Ok(None) };
        let uri = utf8(uri, "index reference")?;
        let (_, index) = parse_object_uri(&uri)?;
        let dims = match self.engine.kv_get(ds, index, AXES)? {
            Some(v) => utf8(v, "axis names")?,
            None => return Ok(None),
        };
        let mut axes = AxisSet::new();
        for dim in dims.split(',').filter(|d| !d.is_empty()) {
            for value in self.engine.kv_list(ds, axis_kv(colloc, dim))? {
                axes.insert(dim, &value);
            }
        }
        debug!(dataset = ds, collocation = colloc, "axes preloaded");
        Ok(Some(ObjView { index, axes }))
    }
}

impl Catalogue for ObjCatalogue {
    fn archive(&mut self, key: &SplitKey, loc: &LocationDescriptor) -> Result<()> {
        let ds = key.dataset.canonical();
        let colloc = key.collocation.canonical();
        self.ensure_dataset(&ds)?;
        let index = self.ensure_collocation(&ds, &colloc)?;
        for (dim, value) in key.element.iter() {
            let k = (ds.clone(), colloc.clone(), dim.to_owned(), value.to_owned());
            if !self.axis_values.contains(&k) {
                self.put(&ds, axis_kv(&colloc, dim), value, "1")?;
                self.axis_values.insert(k);
            }
        }
        self.put(&ds, index, &key.element.canonical(), &encode_descriptor(loc))
    }

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }

    fn close(&mut self) -> Result<()> {
        Ok(())
    }

    fn axis(&mut self, dataset: &Identifier, collocation: &Identifier, dim: &str) -> Result<Vec<String>> {
        Ok(match self.view(dataset, collocation)? {
            Some(v) => v.axes.values(dim).map(str::to_owned).collect(),
            None => Vec::new(),
        })
    }

    fn retrieve(&mut self, key: &SplitKey) -> Result<Option<LocationDescriptor>> {
        let index = match self.view(&key.dataset, &key.collocation)? {
            Some(v) if v.axes.may_contain(&key.element) => v.index,
            _ => return Ok(None),
        };
        let ds = key.dataset.canonical();
        match self.engine.kv_get(&ds, index, &key.element.canonical())? {
            Some(v) => decode_descriptor(&v).map(Some),
            None => Ok(None),
        }
    }

    fn list(&mut self, partial: &PartialIdentifier) -> Result<Vec<ListEntry>> {
        let dataset = partial.fixed_key(&self.schema, Level::Dataset)?;
        let ds = dataset.canonical();
        if !self.engine.ns_exists(&ds)? {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for colloc_key in self.engine.kv_list(&ds, ObjectId::ZERO)? {
            if colloc_key == KEY || colloc_key == SCHEMA {
                continue;
            }
            let colloc = self.schema.parse_key(Level::Collocation, &colloc_key)?;
            if !partial.matches(&colloc) {
                continue;
            }
            let Some(uri) = self.engine.kv_get(&ds, ObjectId::ZERO, &colloc_key)? else { continue };
            let uri = utf8(uri, "index reference")?;
            let (_, index) = parse_object_uri(&uri)?;
            for element_key in self.engine.kv_list(&ds, index)? {
                if element_key == KEY || element_key == AXES {
                    continue;
                }
                let element = self.schema.parse_key(Level::Element, &element_key)?;
                if !partial.matches(&element) {
                    continue;
                }
                if let Some(v) = self.engine.kv_get(&ds, index, &element_key)? {
                    let identifier = Identifier::concat([&dataset, &colloc, &element])?;
                    out.push(ListEntry { identifier, location: decode_descriptor(&v)? });
                }
            }
        }
        out.sort_by(|a, b| a.identifier.cmp(&b.identifier));
        Ok(out)
    }
}
