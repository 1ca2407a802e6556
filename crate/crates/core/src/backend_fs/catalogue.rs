use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tracing::{debug, warn};

use super::format::{
    parse_subtoc, parse_toc, IndexBlock, IndexEntry, IndexLocation, IndexRef, SubtocEntry, TocRecord, UriStore,
};
use super::naming::Namer;
use super::{append_atomic, read_whole, FsShared};
use crate::handle::LocationDescriptor;
use crate::schema::{AxisSet, Identifier, Level, PartialIdentifier, SplitKey};
use crate::session::{Catalogue, ListEntry};
use crate::Result;

/// In-memory indexes of one (session, collocation) and their files.
struct CollocationWriter {
    index_name: String,
    index_file: File,
    index_len: u64,
    full_name: String,
    full_file: File,
    partial: IndexBlock,
    partial_uris: UriStore,
    partial_axes: AxisSet,
    full: IndexBlock,
    full_uris: UriStore,
    full_axes: AxisSet,
}

struct DatasetWriter {
    dir: PathBuf,
    subtoc: Option<(String, File)>,
    collocations: BTreeMap<String, CollocationWriter>,
}

/// One usable index block, as found at preload.
struct Source {
    collocation: String,
    axes: AxisSet,
    /// Absolute paths, indexed by uri id.
    uris: Vec<String>,
    index: IndexLocation,
}

/// A dataset's catalogue as of the moment it was first read by this session.
struct View {
    dir: PathBuf,
    /// Newest first.
    sources: Vec<Source>,
    blocks: HashMap<(String, u64), Option<Arc<IndexBlock>>>,
}

/// Index of one session over the filesystem layout.
pub struct FsCatalogue {
    shared: Arc<FsShared>,
    namer: Namer,
    writers: BTreeMap<String, DatasetWriter>,
    views: HashMap<String, View>,
}

impl FsCatalogue {
    pub(crate) fn new(shared: Arc<FsShared>, session: u64) -> FsCatalogue {
        let namer = Namer::new(shared.clock.clone(), session);
        FsCatalogue { shared, namer, writers: BTreeMap::new(), views: HashMap::new() }
    }

    fn view(&mut self, dataset: &Identifier) -> Result<&mut View> {
        let ds = dataset.canonical();
        if !self.views.contains_key(&ds) {
            let view = preload(&self.shared, self.shared.dataset_dir(dataset))?;
            self.views.insert(ds.clone(), view);
        }
        Ok(self.views.get_mut(&ds).unwrap())
    }
}

fn open_toc(dir: &Path) -> Result<File> {
    Ok(std::fs::OpenOptions::new().append(true).open(dir.join("toc"))?)
}

fn relative_name(uri: &str) -> &str {
    Path::new(uri).file_name().and_then(|n| n.to_str()).unwrap_or(uri)
}

impl Catalogue for FsCatalogue {
    fn archive(&mut self, key: &SplitKey, loc: &LocationDescriptor) -> Result<()> {
        let ds = key.dataset.canonical();
        if !self.writers.contains_key(&ds) {
            let dir = self.shared.ensure_dataset(&key.dataset)?;
            self.writers.insert(ds.clone(), DatasetWriter { dir, subtoc: None, collocations: BTreeMap::new() });
        }
        let w = self.writers.get_mut(&ds).unwrap();
        let colloc = key.collocation.canonical();
        if !w.collocations.contains_key(&colloc) {
            let (index_name, index_file) = self.namer.create(&w.dir, &colloc, "index")?;
            let (full_name, full_file) = self.namer.create(&w.dir, &colloc, "full")?;
            w.collocations.insert(
                colloc.clone(),
                CollocationWriter {
                    index_name,
                    index_file,
                    index_len: 0,
                    full_name,
                    full_file,
                    partial: IndexBlock::default(),
                    partial_uris: UriStore::default(),
                    partial_axes: AxisSet::new(),
                    full: IndexBlock::default(),
                    full_uris: UriStore::default(),
                    full_axes: AxisSet::new(),
                },
            );
        }
        let c = w.collocations.get_mut(&colloc).unwrap();
        let uri = relative_name(&loc.uri);
        let element = key.element.canonical();
        let pid = c.partial_uris.insert(uri);
        c.partial.insert(element.clone(), IndexEntry { uri_id: pid, offset: loc.offset, length: loc.length });
        c.partial_axes.insert_element(&key.element);
        let fid = c.full_uris.insert(uri);
        c.full.insert(element, IndexEntry { uri_id: fid, offset: loc.offset, length: loc.length });
        c.full_axes.insert_element(&key.element);
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        for w in self.writers.values_mut() {
            let mut entries = Vec::new();
            for (colloc, c) in w.collocations.iter_mut().filter(|(_, c)| !c.partial.is_empty()) {
                let block = c.partial.encode();
                let offset = c.index_len;
                c.index_file.write_all(&block)?;
                c.index_file.sync_data()?;
                c.index_len += block.len() as u64;
                entries.push(SubtocEntry(IndexRef {
                    collocation: colloc.clone(),
                    axes: std::mem::take(&mut c.partial_axes),
                    uris: std::mem::take(&mut c.partial_uris),
                    index: IndexLocation { file: c.index_name.clone(), offset, length: block.len() as u64 },
                }));
                c.partial.clear();
            }
            if entries.is_empty() {
                continue;
            }
            let bytes: Vec<u8> = entries.iter().flat_map(SubtocEntry::encode).collect();
            match &mut w.subtoc {
                Some((_, f)) => {
                    f.write_all(&bytes)?;
                    f.sync_data()?;
                }
                None => {
                    let (name, mut f) = self.namer.create(&w.dir, "toc", "subtoc")?;
                    f.write_all(&bytes)?;
                    f.sync_data()?;
                    append_atomic(&open_toc(&w.dir)?, &TocRecord::SubtocPtr { subtoc: name.clone() }.encode()?)?;
                    debug!(dir = %w.dir.display(), subtoc = %name, "sub-TOC published");
                    w.subtoc = Some((name, f));
                }
            }
        }
        Ok(())
    }

    fn close(&mut self) -> Result<()> {
        self.flush()?;
        for w in std::mem::take(&mut self.writers).into_values() {
            let Some((subtoc, _)) = w.subtoc else { continue };
            let mut records = Vec::new();
            for (colloc, mut c) in w.collocations {
                let block = c.full.encode();
                c.full_file.write_all(&block)?;
                c.full_file.sync_data()?;
                let index = IndexRef {
                    collocation: colloc,
                    axes: c.full_axes,
                    uris: c.full_uris,
                    index: IndexLocation { file: c.full_name, offset: 0, length: block.len() as u64 },
                };
                records.push(TocRecord::FullIndex { supersedes: subtoc.clone(), index }.encode()?);
            }
            records.push(TocRecord::Mask { subtoc }.encode()?);
            let toc = open_toc(&w.dir)?;
            for r in &records {
                append_atomic(&toc, r)?;
            }
        }
        Ok(())
    }

    fn axis(&mut self, dataset: &Identifier, collocation: &Identifier, dim: &str) -> Result<Vec<String>> {
        let colloc = collocation.canonical();
        let view = self.view(dataset)?;
        let values: BTreeSet<&str> =
            view.sources.iter().filter(|s| s.collocation == colloc).flat_map(|s| s.axes.values(dim)).collect();
        Ok(values.into_iter().map(str::to_owned).collect())
    }

    fn retrieve(&mut self, key: &SplitKey) -> Result<Option<LocationDescriptor>> {
        let colloc = key.collocation.canonical();
        let element = key.element.canonical();
        let io = self.shared.io.clone();
        let view = self.view(&key.dataset)?;
        for i in 0..view.sources.len() {
            let s = &view.sources[i];
            if s.collocation != colloc || !s.axes.may_contain(&key.element) {
                continue;
            }
            let Some(block) = view.block(i, &io) else { continue };
            if let Some(e) = block.get(&element) {
                return Ok(view.sources[i].location(e));
            }
        }
        Ok(None)
    }

    fn list(&mut self, partial: &PartialIdentifier) -> Result<Vec<ListEntry>> {
        let schema = self.shared.schema.clone();
        let dataset = partial.fixed_key(&schema, Level::Dataset)?;
        let io = self.shared.io.clone();
        let view = self.view(&dataset)?;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for i in 0..view.sources.len() {
            let colloc = schema.parse_key(Level::Collocation, &view.sources[i].collocation)?;
            if !partial.matches(&colloc) {
                continue;
            }
            let Some(block) = view.block(i, &io) else { continue };
            for (element, e) in block.iter() {
                let element = schema.parse_key(Level::Element, element)?;
                if !partial.matches(&element) {
                    continue;
                }
                let id = Identifier::concat([&dataset, &colloc, &element])?;
                if !seen.insert(id.clone()) {
                    continue;
                }
                if let Some(location) = view.sources[i].location(e) {
                    out.push(ListEntry { identifier: id, location });
                }
            }
        }
        out.sort_by(|a, b| a.identifier.cmp(&b.identifier));
        Ok(out)
    }
}

impl Source {
    fn location(&self, e: &IndexEntry) -> Option<LocationDescriptor> {
        let uri = self.uris.get(e.uri_id as usize)?;
        Some(LocationDescriptor::new(uri.clone(), e.offset, e.length))
    }
}

impl View {
    /// Loads (once) the index block of source `i`. Blocks that cannot be read
    /// are skipped with a warning.
    fn block(&mut self, i: usize, io: &crate::handle::IoCounters) -> Option<Arc<IndexBlock>> {
        let loc = &self.sources[i].index;
        let key = (loc.file.clone(), loc.offset);
        if let Some(b) = self.blocks.get(&key) {
            return b.clone();
        }
        let path = self.dir.join(&loc.file);
        let loaded = load_block(&path, loc);
        io.index_load();
        let block = match loaded {
            Ok(b) => Some(Arc::new(b)),
            Err(reason) => {
                warn!(path = %path.display(), offset = loc.offset, %reason, "skipping unreadable index");
                None
            }
        };
        self.blocks.insert(key, block.clone());
        block
    }
}

fn load_block(path: &Path, loc: &IndexLocation) -> std::result::Result<IndexBlock, String> {
    let f = File::open(path).map_err(|e| e.to_string())?;
    let mut buf = vec![0u8; loc.length as usize];
    f.read_exact_at(&mut buf, loc.offset).map_err(|e| e.to_string())?;
    IndexBlock::decode(&buf)
}

/// Reads the TOC in one go and resolves it, newest first, into the index
/// blocks currently visible.
///
/// Version order is TOC order. A full index takes the place of the sub-TOC
/// pointer it supersedes, ranking after every entry of that sub-TOC, so
/// masking a sub-TOC never changes which version of a field wins.
fn preload(shared: &FsShared, dir: PathBuf) -> Result<View> {
    let mut view = View { dir, sources: Vec::new(), blocks: HashMap::new() };
    let toc_path = view.dir.join("toc");
    let Some(buf) = read_whole(&toc_path)? else { return Ok(view) };
    shared.io.toc_read();
    let records = parse_toc(&buf, &toc_path)?;

    let position: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| match r {
            TocRecord::SubtocPtr { subtoc } => Some((subtoc.as_str(), i)),
            _ => None,
        })
        .collect();
    let mut masked = HashSet::new();
    let mut ranked: Vec<((usize, u32), IndexRef)> = Vec::new();
    for (i, rec) in records.iter().enumerate().rev() {
        match rec {
            TocRecord::Init => {}
            TocRecord::Mask { subtoc } => {
                masked.insert(subtoc.as_str());
            }
            TocRecord::FullIndex { supersedes, index } => {
                let at = position.get(supersedes.as_str()).copied().unwrap_or(i);
                ranked.push(((at, u32::MAX), index.clone()));
            }
            TocRecord::SubtocPtr { subtoc } => {
                if masked.contains(subtoc.as_str()) {
                    continue;
                }
                let path = view.dir.join(subtoc);
                let Some(buf) = read_whole(&path)? else {
                    warn!(path = %path.display(), "sub-TOC named by the TOC is missing");
                    continue;
                };
                shared.io.subtoc_read();
                for (j, SubtocEntry(index)) in parse_subtoc(&buf, &path)?.into_iter().enumerate() {
                    ranked.push(((i, j as u32), index));
                }
            }
        }
    }
    ranked.sort_by_key(|r| std::cmp::Reverse(r.0));
    view.sources = ranked
        .into_iter()
        .map(|(_, r)| Source {
            uris: r.uris.uris().iter().map(|u| view.dir.join(u).to_string_lossy().into_owned()).collect(),
            collocation: r.collocation,
            axes: r.axes,
            index: r.index,
        })
        .collect();
    debug!(dir = %view.dir.display(), sources = view.sources.len(), "catalogue preloaded");
    Ok(view)
}
