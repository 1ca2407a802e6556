use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use sha2::{Digest, Sha256};
use tracing::debug;

use crate::log::{LogRecord, LogWriter};
use crate::{
    EngineError, EngineOpCounters, FaultContext, FaultHook, IdRange, ObjectEngine, ObjectId,
    OpKind, Result, WriterTag, MAX_VALUE_SIZE,
};

/// Where an [`Engine`] keeps its state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineMode {
    /// Nothing touches disk. Semantics are identical to durable mode but
    /// nothing survives the engine.
    Memory,
    /// State lives in the given data directory.
    Durable(PathBuf),
}

type KvMap = BTreeMap<String, Arc<[u8]>>;

struct Namespace {
    dir: Option<PathBuf>,
    /// Serialises log appends so that log order equals visibility order.
    writer: Mutex<NsWriter>,
    kvs: RwLock<HashMap<ObjectId, KvMap>>,
    /// Memory mode only; durable blobs are files.
    blobs: RwLock<HashMap<ObjectId, Arc<[u8]>>>,
}

struct NsWriter {
    log: Option<LogWriter>,
    next_id: u128,
}

impl Namespace {
    fn blob_path(&self, id: ObjectId) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("blobs").join(id.to_string()))
    }
}

/// In-process engine. Cheap to share behind an `Arc`; every method takes `&self`.
pub struct Engine {
    dir: Option<PathBuf>,
    _lock: Option<File>,
    namespaces: RwLock<HashMap<String, Arc<Namespace>>>,
    counters: Mutex<EngineOpCounters>,
    fault: RwLock<Option<FaultHook>>,
    tmp_seq: AtomicU64,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("dir", &self.dir).finish_non_exhaustive()
    }
}

const FIRST_ID: u128 = 1;
const ID_LIMIT: u128 = 1 << 127;

fn ns_dir_name(name: &str) -> String {
    let d = Sha256::digest(name.as_bytes());
    d[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn sync_dir(path: &Path) -> Result<()> {
    File::open(path)?.sync_all()?;
    Ok(())
}

impl Engine {
    pub fn open(mode: EngineMode) -> Result<Engine> {
        match mode {
            EngineMode::Memory => Ok(Engine::in_memory()),
            EngineMode::Durable(dir) => Engine::open_dir(dir),
        }
    }

    pub fn in_memory() -> Engine {
        Engine {
            dir: None,
            _lock: None,
            namespaces: RwLock::default(),
            counters: Mutex::default(),
            fault: RwLock::default(),
            tmp_seq: AtomicU64::new(0),
        }
    }

    /// Opens (or initialises) a data directory. Only one engine may hold a
    /// directory at a time; other processes go through an [`EngineServer`](crate::EngineServer).
    pub fn open_dir(dir: impl Into<PathBuf>) -> Result<Engine> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("ns"))?;
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join("LOCK"))?;
        if lock.try_lock().is_err() {
            return Err(EngineError::Locked(dir));
        }

        let mut namespaces = HashMap::new();
        for entry in fs::read_dir(dir.join("ns"))? {
            let entry = entry?;
            let path = entry.path();
            let fname = entry.file_name();
            if fname.to_string_lossy().starts_with('.') {
                // interrupted namespace creation
                fs::remove_dir_all(&path)?;
                continue;
            }
            let name = fs::read_to_string(path.join("NAME")).map_err(|e| EngineError::Corrupt {
                path: path.clone(),
                reason: format!("missing NAME: {e}"),
            })?;
            let ns = Self::load_namespace(&path)?;
            namespaces.insert(name, Arc::new(ns));
        }
        debug!(dir = %dir.display(), namespaces = namespaces.len(), "engine opened");
        Ok(Engine {
            dir: Some(dir),
            _lock: Some(lock),
            namespaces: RwLock::new(namespaces),
            counters: Mutex::default(),
            fault: RwLock::default(),
            tmp_seq: AtomicU64::new(0),
        })
    }

    fn load_namespace(path: &Path) -> Result<Namespace> {
        let (mut log, records) = LogWriter::open(&path.join("kv.log"))?;
        let mut kvs: HashMap<ObjectId, KvMap> = HashMap::new();
        let mut next_id = FIRST_ID;
        for rec in records {
            match rec {
                LogRecord::Put { kv, key, value } => {
                    kvs.entry(kv).or_default().insert(key, value.into());
                }
                LogRecord::Cursor { next } => next_id = next_id.max(next),
            }
        }
        let live: usize = kvs.values().map(|m| m.len()).sum::<usize>() + 1;
        if log.records() as usize > 4 * live + 1024 {
            log.rewrite(&live_records(&kvs, next_id))?;
        }
        let blobs = path.join("blobs");
        fs::create_dir_all(&blobs)?;
        for entry in fs::read_dir(&blobs)? {
            let entry = entry?;
            if entry.file_name().to_string_lossy().starts_with(".tmp") {
                fs::remove_file(entry.path())?;
            }
        }
        Ok(Namespace {
            dir: Some(path.to_owned()),
            writer: Mutex::new(NsWriter { log: Some(log), next_id }),
            kvs: RwLock::new(kvs),
            blobs: RwLock::default(),
        })
    }

    pub fn mode(&self) -> EngineMode {
        match &self.dir {
            Some(d) => EngineMode::Durable(d.clone()),
            None => EngineMode::Memory,
        }
    }

    pub fn set_fault_hook(&self, hook: Option<FaultHook>) {
        *self.fault.write().unwrap() = hook;
    }

    /// Rewrites the log of `ns` so it holds only live entries.
    pub fn compact(&self, ns: &str) -> Result<()> {
        let ns = self.namespace(ns)?;
        let mut w = ns.writer.lock().unwrap();
        let next_id = w.next_id;
        if let Some(log) = w.log.as_mut() {
            let kvs = ns.kvs.read().unwrap();
            log.rewrite(&live_records(&kvs, next_id))?;
        }
        Ok(())
    }

    fn namespace(&self, name: &str) -> Result<Arc<Namespace>> {
        self.namespaces
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| EngineError::UnknownNamespace(name.to_owned()))
    }

    fn check_fault(&self, ctx: FaultContext<'_>) -> Result<()> {
        if let Some(hook) = self.fault.read().unwrap().as_ref() {
            if hook(&ctx) {
                return Err(EngineError::InjectedFault(format!(
                    "{} {}/{}{}",
                    ctx.op.name(),
                    ctx.ns,
                    ctx.object,
                    ctx.key.map(|k| format!(" key {k}")).unwrap_or_default()
                )));
            }
        }
        Ok(())
    }

    fn count(&self, op: OpKind) {
        self.counters.lock().unwrap().bump(op);
    }

    fn create_namespace_dir(&self, name: &str) -> Result<PathBuf> {
        let root = self.dir.as_ref().expect("durable engine").join("ns");
        let tmp = root.join(format!(".tmp-{}", self.tmp_seq.fetch_add(1, Ordering::Relaxed)));
        fs::create_dir(&tmp)?;
        fs::create_dir(tmp.join("blobs"))?;
        let mut f = File::create(tmp.join("NAME"))?;
        f.write_all(name.as_bytes())?;
        f.sync_all()?;
        File::create(tmp.join("kv.log"))?.sync_all()?;
        sync_dir(&tmp)?;
        let dst = root.join(ns_dir_name(name));
        fs::rename(&tmp, &dst)?;
        sync_dir(&root)?;
        Ok(dst)
    }
}

fn live_records(kvs: &HashMap<ObjectId, KvMap>, next_id: u128) -> Vec<LogRecord> {
    let mut out: Vec<LogRecord> = kvs
        .iter()
        .flat_map(|(kv, m)| {
            m.iter().map(|(k, v)| LogRecord::Put { kv: *kv, key: k.clone(), value: v.to_vec() })
        })
        .collect();
    out.push(LogRecord::Cursor { next: next_id });
    out
}

impl ObjectEngine for Engine {
    fn ns_create_if_absent(&self, name: &str) -> Result<bool> {
        self.count(OpKind::NsCreate);
        if self.namespaces.read().unwrap().contains_key(name) {
            return Ok(false);
        }
        let mut all = self.namespaces.write().unwrap();
        if all.contains_key(name) {
            return Ok(false);
        }
        let ns = match &self.dir {
            Some(_) => Self::load_namespace(&self.create_namespace_dir(name)?)?,
            None => Namespace {
                dir: None,
                writer: Mutex::new(NsWriter { log: None, next_id: FIRST_ID }),
                kvs: RwLock::default(),
                blobs: RwLock::default(),
            },
        };
        all.insert(name.to_owned(), Arc::new(ns));
        Ok(true)
    }

    fn ns_exists(&self, name: &str) -> Result<bool> {
        Ok(self.namespaces.read().unwrap().contains_key(name))
    }

    fn kv_put(&self, writer: WriterTag, ns_name: &str, kv: ObjectId, key: &str, value: &[u8]) -> Result<()> {
        if value.len() > MAX_VALUE_SIZE {
            return Err(EngineError::ValueTooLarge { size: value.len(), limit: MAX_VALUE_SIZE });
        }
        self.check_fault(FaultContext { op: OpKind::KvPut, ns: ns_name, object: kv, key: Some(key) })?;
        let ns = self.namespace(ns_name)?;
        {
            let mut w = ns.writer.lock().unwrap();
            if let Some(log) = w.log.as_mut() {
                log.append(&LogRecord::Put { kv, key: key.to_owned(), value: value.to_vec() })?;
            }
            ns.kvs.write().unwrap().entry(kv).or_default().insert(key.to_owned(), value.into());
        }
        let mut c = self.counters.lock().unwrap();
        c.bump(OpKind::KvPut);
        c.record_put(ns_name, kv, writer);
        Ok(())
    }

    fn kv_get(&self, ns_name: &str, kv: ObjectId, key: &str) -> Result<Option<Vec<u8>>> {
        let ns = self.namespace(ns_name)?;
        let v = ns.kvs.read().unwrap().get(&kv).and_then(|m| m.get(key).cloned());
        self.count(OpKind::KvGet);
        Ok(v.map(|v| v.to_vec()))
    }

    fn kv_list(&self, ns_name: &str, kv: ObjectId) -> Result<Vec<String>> {
        let ns = self.namespace(ns_name)?;
        let keys = ns
            .kvs
            .read()
            .unwrap()
            .get(&kv)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default();
        self.count(OpKind::KvList);
        Ok(keys)
    }

    fn blob_write(&self, ns_name: &str, id: ObjectId, bytes: &[u8]) -> Result<()> {
        self.check_fault(FaultContext { op: OpKind::BlobWrite, ns: ns_name, object: id, key: None })?;
        let ns = self.namespace(ns_name)?;
        match ns.blob_path(id) {
            Some(path) => {
                let dir = path.parent().unwrap();
                let tmp = dir.join(format!(".tmp-{id}-{}", self.tmp_seq.fetch_add(1, Ordering::Relaxed)));
                let mut f = File::create(&tmp)?;
                f.write_all(bytes)?;
                f.sync_data()?;
                drop(f);
                fs::rename(&tmp, &path)?;
                sync_dir(dir)?;
            }
            None => {
                ns.blobs.write().unwrap().insert(id, bytes.into());
            }
        }
        self.count(OpKind::BlobWrite);
        Ok(())
    }

    fn blob_read(&self, ns_name: &str, id: ObjectId, offset: u64, len: u64) -> Result<Vec<u8>> {
        let ns = self.namespace(ns_name)?;
        let not_found = || EngineError::BlobNotFound { ns: ns_name.to_owned(), id };
        let out_of_range = |size| EngineError::OutOfRange { id, offset, len, size };
        let data = match ns.blob_path(id) {
            Some(path) => {
                let f = match File::open(&path) {
                    Ok(f) => f,
                    Err(e) if e.kind() == ErrorKind::NotFound => return Err(not_found()),
                    Err(e) => return Err(e.into()),
                };
                // size of the version actually opened; a concurrent rename
                // cannot change it under us
                let size = f.metadata()?.len();
                if offset.checked_add(len).is_none_or(|end| end > size) {
                    return Err(out_of_range(size));
                }
                let mut buf = vec![0u8; len as usize];
                f.read_exact_at(&mut buf, offset)?;
                buf
            }
            None => {
                let blob = ns.blobs.read().unwrap().get(&id).cloned().ok_or_else(not_found)?;
                let size = blob.len() as u64;
                if offset.checked_add(len).is_none_or(|end| end > size) {
                    return Err(out_of_range(size));
                }
                blob[offset as usize..(offset + len) as usize].to_vec()
            }
        };
        self.count(OpKind::BlobRead);
        Ok(data)
    }

    fn allocate_ids(&self, ns_name: &str, n: u64) -> Result<IdRange> {
        if n == 0 {
            return Err(EngineError::ZeroAllocation);
        }
        let ns = self.namespace(ns_name)?;
        let range = {
            let mut w = ns.writer.lock().unwrap();
            let start = w.next_id;
            let next = start + n as u128;
            if next > ID_LIMIT {
                return Err(EngineError::IdSpaceExhausted(ns_name.to_owned()));
            }
            if let Some(log) = w.log.as_mut() {
                log.append(&LogRecord::Cursor { next })?;
            }
            w.next_id = next;
            IdRange { start, count: n }
        };
        self.count(OpKind::IdAlloc);
        Ok(range)
    }

    fn counters_snapshot(&self) -> Result<EngineOpCounters> {
        Ok(self.counters.lock().unwrap().clone())
    }

    fn reset_counters(&self) -> Result<()> {
        *self.counters.lock().unwrap() = EngineOpCounters::default();
        Ok(())
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        if let Some(dir) = &self.dir {
            debug!(dir = %dir.display(), "engine closed");
        }
    }
}
