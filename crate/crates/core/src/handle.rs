use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::{Error, Result};

/// Where the bytes of one field live.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocationDescriptor {
    pub uri: String,
    pub offset: u64,
    pub length: u64,
}

impl LocationDescriptor {
    pub fn new(uri: impl Into<String>, offset: u64, length: u64) -> LocationDescriptor {
        LocationDescriptor { uri: uri.into(), offset, length }
    }

    pub fn end(&self) -> u64 {
        self.offset + self.length
    }
}

impl fmt::Display for LocationDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}+{}", self.uri, self.offset, self.length)
    }
}

/// Reads byte ranges of the resources a backend hands out.
pub trait SegmentSource: Send + Sync {
    /// Appends the bytes of every `(offset, length)` range of `uri` to `out`,
    /// opening the resource once.
    fn read_ranges(&self, uri: &str, ranges: &[(u64, u64)], out: &mut Vec<u8>) -> Result<()>;
}

/// Lazy reader over a list of locations. Nothing is read until [`read`](DataHandle::read).
#[derive(Clone)]
pub struct DataHandle {
    backend: String,
    segments: Vec<LocationDescriptor>,
    source: Arc<dyn SegmentSource>,
}

impl fmt::Debug for DataHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataHandle").field("backend", &self.backend).field("segments", &self.segments).finish()
    }
}

impl DataHandle {
    pub fn new(backend: impl Into<String>, segments: Vec<LocationDescriptor>, source: Arc<dyn SegmentSource>) -> Self {
        DataHandle { backend: backend.into(), segments, source }
    }

    pub fn backend(&self) -> &str {
        &self.backend
    }

    pub fn segments(&self) -> &[LocationDescriptor] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Total number of bytes [`read`](DataHandle::read) returns.
    pub fn len(&self) -> u64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Reads all segments in order. Each run of consecutive segments on the
    /// same uri opens that resource once.
    pub fn read(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.len() as usize);
        let mut start = 0;
        while start < self.segments.len() {
            let uri = &self.segments[start].uri;
            let end = start + self.segments[start..].iter().take_while(|s| &s.uri == uri).count();
            let ranges: Vec<(u64, u64)> = self.segments[start..end].iter().map(|s| (s.offset, s.length)).collect();
            self.source.read_ranges(uri, &ranges, &mut out)?;
            start = end;
        }
        Ok(out)
    }

    /// Reads each segment separately.
    pub fn read_segments(&self) -> Result<Vec<Vec<u8>>> {
        self.segments
            .iter()
            .map(|s| {
                let mut out = Vec::with_capacity(s.length as usize);
                self.source.read_ranges(&s.uri, &[(s.offset, s.length)], &mut out)?;
                Ok(out)
            })
            .collect()
    }
}

/// Concatenates handles, coalescing adjacent segments that continue each
/// other within the same uri.
pub fn merge_handles(handles: Vec<DataHandle>) -> Result<DataHandle> {
    join(handles, true)
}

/// Concatenates handles keeping every segment.
pub fn concat_handles(handles: Vec<DataHandle>) -> Result<DataHandle> {
    join(handles, false)
}

fn join(handles: Vec<DataHandle>, coalesce: bool) -> Result<DataHandle> {
    let mut iter = handles.into_iter();
    let Some(first) = iter.next() else {
        return Err(Error::InvalidRequest("nothing to merge".into()));
    };
    let mut merged = DataHandle { backend: first.backend, segments: Vec::new(), source: first.source };
    let mut push = |seg: LocationDescriptor| match merged.segments.last_mut() {
        Some(last) if coalesce && last.uri == seg.uri && last.end() == seg.offset => last.length += seg.length,
        _ => merged.segments.push(seg),
    };
    first.segments.into_iter().for_each(&mut push);
    for h in iter {
        if h.backend != merged.backend {
            return Err(Error::MixedBackends(merged.backend, h.backend));
        }
        h.segments.into_iter().for_each(&mut push);
    }
    Ok(merged)
}

/// Filesystem I/O made by one store, shared by its sessions.
#[derive(Debug, Default)]
pub struct IoCounters {
    toc_reads: AtomicU64,
    subtoc_reads: AtomicU64,
    index_loads: AtomicU64,
    data_opens: AtomicU64,
    data_reads: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IoSnapshot {
    pub toc_reads: u64,
    pub subtoc_reads: u64,
    pub index_loads: u64,
    pub data_opens: u64,
    pub data_reads: u64,
}

impl IoSnapshot {
    pub fn since(&self, earlier: &IoSnapshot) -> IoSnapshot {
        IoSnapshot {
            toc_reads: self.toc_reads - earlier.toc_reads,
            subtoc_reads: self.subtoc_reads - earlier.subtoc_reads,
            index_loads: self.index_loads - earlier.index_loads,
            data_opens: self.data_opens - earlier.data_opens,
            data_reads: self.data_reads - earlier.data_reads,
        }
    }
}

impl IoCounters {
    pub fn snapshot(&self) -> IoSnapshot {
        IoSnapshot {
            toc_reads: self.toc_reads.load(Ordering::SeqCst),
            subtoc_reads: self.subtoc_reads.load(Ordering::SeqCst),
            index_loads: self.index_loads.load(Ordering::SeqCst),
            data_opens: self.data_opens.load(Ordering::SeqCst),
            data_reads: self.data_reads.load(Ordering::SeqCst),
        }
    }

    pub(crate) fn toc_read(&self) {
        self.toc_reads.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn subtoc_read(&self) {
        self.subtoc_reads.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn index_load(&self) {
        self.index_loads.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn data_open(&self) {
        self.data_opens.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn data_read(&self) {
        self.data_reads.fetch_add(1, Ordering::SeqCst);
    }
}
