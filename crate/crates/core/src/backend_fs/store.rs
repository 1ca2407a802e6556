use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use tracing::debug;

use super::naming::Namer;
use super::{FsShared, BACKEND_TAG};
use crate::handle::{DataHandle, LocationDescriptor};
use crate::schema::SplitKey;
use crate::session::Store;
use crate::Result;

struct DataFile {
    uri: String,
    writer: BufWriter<File>,
    offset: u64,
    dirty: bool,
}

/// Field bytes of one session: one append-only data file per (dataset, collocation).
pub struct FsStore {
    shared: Arc<FsShared>,
    namer: Namer,
    datasets: HashMap<String, PathBuf>,
    files: HashMap<(String, String), DataFile>,
}

impl FsStore {
    pub(crate) fn new(shared: Arc<FsShared>, session: u64) -> FsStore {
        let namer = Namer::new(shared.clock.clone(), session);
        FsStore { shared, namer, datasets: HashMap::new(), files: HashMap::new() }
    }
}

impl Store for FsStore {
    fn archive(&mut self, key: &SplitKey, data: &[u8]) -> Result<LocationDescriptor> {
        let ds = key.dataset.canonical();
        let colloc = key.collocation.canonical();
        let file = match self.files.get_mut(&(ds.clone(), colloc.clone())) {
            Some(f) => f,
            None => {
                let dir = match self.datasets.get(&ds) {
                    Some(d) => d.clone(),
                    None => {
                        let d = self.shared.ensure_dataset(&key.dataset)?;
                        self.datasets.insert(ds.clone(), d.clone());
                        d
                    }
                };
                let (name, f) = self.namer.create(&dir, &colloc, "data")?;
                let uri = dir.join(&name).to_string_lossy().into_owned();
                debug!(%uri, "data file created");
                let df = DataFile { uri, writer: BufWriter::with_capacity(self.shared.buffer_size, f), offset: 0, dirty: false };
                self.files.entry((ds, colloc)).or_insert(df)
            }
        };
        file.writer.write_all(data)?;
        let loc = LocationDescriptor::new(file.uri.clone(), file.offset, data.len() as u64);
        file.offset += data.len() as u64;
        file.dirty = true;
        Ok(loc)
    }

    fn flush(&mut self) -> Result<()> {
        for f in self.files.values_mut().filter(|f| f.dirty) {
            f.writer.flush()?;
            f.writer.get_ref().sync_data()?;
            f.dirty = false;
        }
        Ok(())
    }

    fn retrieve(&self, loc: &LocationDescriptor) -> DataHandle {
        DataHandle::new(BACKEND_TAG, vec![loc.clone()], self.shared.reader.clone())
    }

    fn empty_handle(&self) -> DataHandle {
        DataHandle::new(BACKEND_TAG, Vec::new(), self.shared.reader.clone())
    }

    fn close(&mut self) -> Result<()> {
        self.flush()?;
        self.files.clear();
        Ok(())
    }
}
