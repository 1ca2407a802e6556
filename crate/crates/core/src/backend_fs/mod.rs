//! Filesystem backend.
//!
//! Each dataset is a directory under the root named by its canonical key:
//!
//! ```text
//! <root>/<dataset>/toc              shared record stream, appended atomically
//! <root>/<dataset>/schema           copy of the schema the dataset was created with
//! <root>/<dataset>/<unique>.data    field bytes of one (session, collocation)
//! <root>/<dataset>/<unique>.index   partial index blocks of one (session, collocation)
//! <root>/<dataset>/<unique>.full    full index of one (session, collocation), written at close
//! <root>/<dataset>/<unique>.subtoc  per-flush index pointers of one session
//! ```
//!
//! No file is ever written by two sessions except the TOC, and TOC writes are
//! single appends below the atomic append limit. Directories are not synced
//! after data files are created; only file contents are.

mod catalogue;
pub mod format;
mod naming;
mod store;

use std::fs::{self, File};
use std::io::{ErrorKind, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use tracing::debug;

pub use catalogue::FsCatalogue;
pub use naming::{system_clock, Clock};
pub use store::FsStore;

use crate::handle::{IoCounters, SegmentSource};
use crate::schema::{Identifier, Schema};
use crate::{Error, Result};
use format::TocRecord;

pub const BACKEND_TAG: &str = "fs";

/// Default write buffer of a data file.
pub const DEFAULT_BUFFER_SIZE: usize = 8 << 20;

pub(crate) struct FsShared {
    pub(crate) root: PathBuf,
    pub(crate) schema: Arc<Schema>,
    pub(crate) io: Arc<IoCounters>,
    pub(crate) clock: Clock,
    pub(crate) buffer_size: usize,
    pub(crate) reader: Arc<FsReader>,
}

impl FsShared {
    pub(crate) fn new(root: PathBuf, schema: Arc<Schema>, io: Arc<IoCounters>, clock: Clock) -> FsShared {
        let reader = Arc::new(FsReader { io: io.clone() });
        FsShared { root, schema, io, clock, buffer_size: DEFAULT_BUFFER_SIZE, reader }
    }

    pub(crate) fn dataset_dir(&self, dataset: &Identifier) -> PathBuf {
        self.root.join(dataset.canonical())
    }

    /// Creates the dataset directory unless it exists, then checks that it
    /// was created with our schema.
    ///
    /// The directory is populated under a temporary name and renamed into
    /// place, so it never exists without its TOC and schema.
    pub(crate) fn ensure_dataset(&self, dataset: &Identifier) -> Result<PathBuf> {
        static SEQ: AtomicU64 = AtomicU64::new(0);
        let dir = self.dataset_dir(dataset);
        let text = self.schema.to_text();
        if !dir.exists() {
            fs::create_dir_all(&self.root)?;
            let tmp = self.root.join(format!(
                ".init.{}.{}.{}",
                naming::host_name(),
                std::process::id(),
                SEQ.fetch_add(1, Ordering::Relaxed)
            ));
            fs::create_dir(&tmp)?;
            write_synced(&tmp.join("schema"), text.as_bytes())?;
            write_synced(&tmp.join("toc"), &TocRecord::Init.encode()?)?;
            File::open(&tmp)?.sync_all()?;
            match fs::rename(&tmp, &dir) {
                Ok(()) => {
                    File::open(&self.root)?.sync_all()?;
                    debug!(dir = %dir.display(), "dataset created");
                }
                Err(e) if dir.exists() => {
                    debug!(dir = %dir.display(), error = %e, "lost dataset creation race");
                    fs::remove_dir_all(&tmp)?;
                }
                Err(e) => {
                    let _ = fs::remove_dir_all(&tmp);
                    return Err(e.into());
                }
            }
        }
        let existing = fs::read_to_string(dir.join("schema"))?;
        if Schema::parse(&existing)? != *self.schema {
            return Err(Error::SchemaMismatch(dir));
        }
        Ok(dir)
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

/// Reads a whole file with a single positioned read.
pub(crate) fn read_whole(path: &Path) -> Result<Option<Vec<u8>>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let len = f.metadata()?.len() as usize;
    let mut buf = vec![0u8; len];
    let mut filled = 0;
    while filled < len {
        match f.read_at(&mut buf[filled..], filled as u64)? {
            0 => break,
            n => filled += n,
        }
    }
    buf.truncate(filled);
    Ok(Some(buf))
}

/// Appends one record with a single write, then syncs.
pub(crate) fn append_atomic(file: &File, record: &[u8]) -> Result<()> {
    let written = (&*file).write(record)?;
    if written != record.len() {
        return Err(Error::Io(std::io::Error::other(format!(
            "short append: {written} of {} bytes",
            record.len()
        ))));
    }
    file.sync_data()?;
    Ok(())
}

/// Reads data files named by absolute path.
pub(crate) struct FsReader {
    io: Arc<IoCounters>,
}

impl SegmentSource for FsReader {
    fn read_ranges(&self, uri: &str, ranges: &[(u64, u64)], out: &mut Vec<u8>) -> Result<()> {
        let f = File::open(uri)?;
        self.io.data_open();
        for &(offset, length) in ranges {
            let start = out.len();
            out.resize(start + length as usize, 0);
            self.io.data_read();
            f.read_exact_at(&mut out[start..], offset).map_err(|e| match e.kind() {
                ErrorKind::UnexpectedEof => Error::ShortRead { uri: uri.to_owned(), offset, wanted: length },
                _ => e.into(),
            })?;
        }
        Ok(())
    }
}
