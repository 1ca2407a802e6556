//! Store configuration and the process-wide entry point.
//!
//! Config files hold `key = value` lines; `#` starts a comment.
//!
//! ```text
//! backend = fs            # or obj
//! schema = schema.txt     # relative paths resolve against the config file
//! root = /data/fields     # fs root directory, or engine data directory
//! engine = local          # obj only: local | socket | memory
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, Weak};

use fieldstore_engine::{Engine, ObjectEngine, RemoteEngine, WriterTag};
use tracing::debug;

use crate::backend_fs::{self, Clock, FsCatalogue, FsShared, FsStore};
use crate::backend_obj::{ObjCatalogue, ObjStore};
use crate::handle::{IoCounters, IoSnapshot};
use crate::schema::Schema;
use crate::session::Session;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Fs,
    Obj,
}

/// How the object backend reaches its engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineAccess {
    /// Engine opened in this process on the data directory, shared by every
    /// store of the process with the same root.
    Local,
    /// Engine served by another process on `<root>/engine.sock`.
    Socket,
    /// In-memory engine shared by every store of the process with the same root.
    Memory,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub backend: BackendKind,
    pub schema_path: PathBuf,
    pub root: PathBuf,
    pub engine: EngineAccess,
}

/// Socket an engine of `root` is served on.
pub fn socket_path(root: &Path) -> PathBuf {
    root.join("engine.sock")
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Config> {
        let mut backend = None;
        let mut schema = None;
        let mut root = None;
        let mut engine = EngineAccess::Local;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config(format!("line {}: {msg}", n + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "backend" => {
                    backend = Some(match v {
                        "fs" => BackendKind::Fs,
                        "obj" => BackendKind::Obj,
                        _ => return Err(err(format!("unknown backend `{v}`"))),
                    })
                }
                "schema" => schema = Some(base.join(v)),
                "root" => root = Some(base.join(v)),
                "engine" => {
                    engine = match v {
                        "local" => EngineAccess::Local,
                        "socket" => EngineAccess::Socket,
                        "memory" => EngineAccess::Memory,
                        _ => return Err(err(format!("unknown engine access `{v}`"))),
                    }
                }
                // striping applies to parallel filesystems only
                "stripe_count" | "stripe_size" => debug!(key = k, value = v, "ignoring striping directive"),
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        Ok(Config {
            backend: backend.ok_or_else(|| Error::Config("missing `backend`".into()))?,
            schema_path: schema.ok_or_else(|| Error::Config("missing `schema`".into()))?,
            root: root.ok_or_else(|| Error::Config("missing `root`".into()))?,
            engine,
        })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_text(&self) -> String {
        let backend = match self.backend {
            BackendKind::Fs => "fs",
            BackendKind::Obj => "obj",
        };
        let engine = match self.engine {
            EngineAccess::Local => "local",
            EngineAccess::Socket => "socket",
            EngineAccess::Memory => "memory",
        };
        format!(
            "backend = {backend}\nschema = {}\nroot = {}\nengine = {engine}\n",
            self.schema_path.display(),
            self.root.display()
        )
    }
}

type Registry = Mutex<HashMap<(PathBuf, bool), Weak<Engine>>>;

/// Engines opened by this process, so that every store on one root shares one.
fn shared_engine(root: &Path, memory: bool) -> Result<Arc<Engine>> {
    static ENGINES: OnceLock<Registry> = OnceLock::new();
    let mut all = ENGINES.get_or_init(Registry::default).lock().unwrap();
    let key = (root.to_owned(), memory);
    if let Some(e) = all.get(&key).and_then(Weak::upgrade) {
        return Ok(e);
    }
    let engine = Arc::new(if memory { Engine::in_memory() } else { Engine::open_dir(root)? });
    all.insert(key, Arc::downgrade(&engine));
    Ok(engine)
}

fn next_session_id() -> u64 {
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

/// Writer tag unique across the processes of one host.
fn writer_tag(session: u64) -> WriterTag {
    (u64::from(std::process::id()) << 32) | (session & 0xffff_ffff)
}

enum Backend {
    Fs(Arc<FsShared>),
    Obj(Arc<dyn ObjectEngine>),
}

/// An opened store. Cheap to clone; hands out sessions.
#[derive(Clone)]
pub struct FieldStore {
    schema: Arc<Schema>,
    backend: Arc<Backend>,
    io: Arc<IoCounters>,
}

impl FieldStore {
    pub fn open(config: &Config) -> Result<FieldStore> {
        let schema = Schema::parse(&std::fs::read_to_string(&config.schema_path)?)?;
        match config.backend {
            BackendKind::Fs => FieldStore::fs(&config.root, schema),
            BackendKind::Obj => {
                let engine: Arc<dyn ObjectEngine> = match config.engine {
                    EngineAccess::Local => shared_engine(&config.root, false)?,
                    EngineAccess::Memory => shared_engine(&config.root, true)?,
                    EngineAccess::Socket => Arc::new(RemoteEngine::connect(socket_path(&config.root))?),
                };
                Ok(FieldStore::obj(engine, schema))
            }
        }
    }

    pub fn open_path(config: &Path) -> Result<FieldStore> {
        FieldStore::open(&Config::load(config)?)
    }

    pub fn fs(root: impl Into<PathBuf>, schema: Schema) -> Result<FieldStore> {
        FieldStore::fs_with_clock(root, schema, backend_fs::system_clock())
    }

    /// Filesystem store whose unique file names use `clock`.
    pub fn fs_with_clock(root: impl Into<PathBuf>, schema: Schema, clock: Clock) -> Result<FieldStore> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        let schema = Arc::new(schema);
        let io = Arc::new(IoCounters::default());
        let shared = FsShared::new(root, schema.clone(), io.clone(), clock);
        Ok(FieldStore { schema, backend: Arc::new(Backend::Fs(Arc::new(shared))), io })
    }

    pub fn obj(engine: Arc<dyn ObjectEngine>, schema: Schema) -> FieldStore {
        FieldStore {
            schema: Arc::new(schema),
            backend: Arc::new(Backend::Obj(engine)),
            io: Arc::new(IoCounters::default()),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn kind(&self) -> BackendKind {
        match *self.backend {
            Backend::Fs(_) => BackendKind::Fs,
            Backend::Obj(_) => BackendKind::Obj,
        }
    }

    /// Root directory of a filesystem store.
    pub fn root(&self) -> Option<&Path> {
        match &*self.backend {
            Backend::Fs(s) => Some(&s.root),
            Backend::Obj(_) => None,
        }
    }

    /// Engine of an object store.
    pub fn engine(&self) -> Option<Arc<dyn ObjectEngine>> {
        match &*self.backend {
            Backend::Fs(_) => None,
            Backend::Obj(e) => Some(e.clone()),
        }
    }

    /// Filesystem catalogue and data I/O performed through this store.
    pub fn io(&self) -> IoSnapshot {
        self.io.snapshot()
    }

    pub fn session(&self) -> Session {
        let id = next_session_id();
        match &*self.backend {
            Backend::Fs(shared) => Session::new(
                self.schema.clone(),
                Box::new(FsStore::new(shared.clone(), id)),
                Box::new(FsCatalogue::new(shared.clone(), id)),
            ),
            Backend::Obj(engine) => Session::new(
                self.schema.clone(),
                Box::new(ObjStore::new(engine.clone())),
                Box::new(ObjCatalogue::new(engine.clone(), self.schema.clone(), writer_tag(id))),
            ),
        }
    }
}
