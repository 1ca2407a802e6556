//! Append-only namespace log.
//!
//! Record layout: `u32 body length | u32 crc32c(body) | body`, where the body
//! is `u8 kind` followed by the kind's payload:
//!
//! - `1` put: `u128 kv | str key | bytes value`
//! - `2` id cursor: `u128 next unallocated id`
//!
//! Replay stops at the first incomplete or mismatching record; everything
//! from there on is treated as a torn tail and truncated.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use tracing::warn;

use crate::wire::{Decoder, Encoder};
use crate::{ObjectId, Result};

const KIND_PUT: u8 = 1;
const KIND_CURSOR: u8 = 2;
const HEADER: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum LogRecord {
    Put { kv: ObjectId, key: String, value: Vec<u8> },
    Cursor { next: u128 },
}

impl LogRecord {
    pub(crate) fn encode(&self) -> Vec<u8> {
        let mut body = Encoder::new();
        match self {
            LogRecord::Put { kv, key, value } => {
                body.u8(KIND_PUT).u128(kv.0).str(key).bytes(value);
            }
            LogRecord::Cursor { next } => {
                body.u8(KIND_CURSOR).u128(*next);
            }
        }
        frame(body.as_slice())
    }

    fn decode_body(body: &[u8]) -> Option<LogRecord> {
        let mut d = Decoder::new(body);
        let rec = match d.u8().ok()? {
            KIND_PUT => LogRecord::Put {
                kv: ObjectId(d.u128().ok()?),
                key: d.str().ok()?.to_owned(),
                value: d.bytes().ok()?.to_vec(),
            },
            KIND_CURSOR => LogRecord::Cursor { next: d.u128().ok()? },
            _ => return None,
        };
        d.is_empty().then_some(rec)
    }
}

fn frame(body: &[u8]) -> Vec<u8> {
    let mut out = Encoder::with_capacity(body.len() + HEADER);
    out.u32(body.len() as u32).u32(crc32c::crc32c(body)).raw(body);
    out.into_inner()
}

/// Parses every intact record and returns them with the length of the valid prefix.
pub(crate) fn parse(buf: &[u8]) -> (Vec<LogRecord>, usize) {
    let mut records = Vec::new();
    let mut pos = 0;
    while buf.len() - pos >= HEADER {
        let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(buf[pos + 4..pos + 8].try_into().unwrap());
        let Some(body) = buf.get(pos + HEADER..pos + HEADER + len) else { break };
        if crc32c::crc32c(body) != crc {
            break;
        }
        let Some(rec) = LogRecord::decode_body(body) else { break };
        records.push(rec);
        pos += HEADER + len;
    }
    (records, pos)
}

pub(crate) struct LogWriter {
    path: PathBuf,
    file: File,
    records: u64,
}

impl LogWriter {
    /// Opens (creating if needed) the log at `path`, replays it and truncates
    /// any torn tail.
    pub(crate) fn open(path: &Path) -> Result<(LogWriter, Vec<LogRecord>)> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let (records, valid) = parse(&buf);
        if valid < buf.len() {
            warn!(path = %path.display(), dropped = buf.len() - valid, "truncating torn log tail");
            file.set_len(valid as u64)?;
            file.sync_all()?;
        }
        let n = records.len() as u64;
        Ok((LogWriter { path: path.to_owned(), file, records: n }, records))
    }

    /// Appends one record and syncs it to durable storage.
    pub(crate) fn append(&mut self, rec: &LogRecord) -> Result<()> {
        self.file.write_all(&rec.encode())?;
        self.file.sync_data()?;
        self.records += 1;
        Ok(())
    }

    pub(crate) fn records(&self) -> u64 {
        self.records
    }

    /// Replaces the log with `live` records via a synced temporary file and rename.
    pub(crate) fn rewrite(&mut self, live: &[LogRecord]) -> Result<()> {
        let tmp = self.path.with_extension("log.compact");
        {
            let mut f = File::create(&tmp)?;
            for rec in live {
                f.write_all(&rec.encode())?;
            }
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &self.path)?;
        if let Some(dir) = self.path.parent() {
            File::open(dir)?.sync_all()?;
        }
        self.file = OpenOptions::new().append(true).open(&self.path)?;
        self.records = live.len() as u64;
        Ok(())
    }
}
