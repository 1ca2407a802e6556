//! Local socket protocol.
//!
//! Every message is framed as `u32 little-endian length | body`. A request
//! body is `u8 op-code | payload`; a response body is `u8 status | payload`
//! where status 0 carries the op-specific result and status 1 a UTF-8 error
//! message. One request is answered by exactly one response.
//!
//! | op | request payload                              | ok payload                 |
//! |----|----------------------------------------------|----------------------------|
//! | 1  | `str ns`                                     | `u8 created`               |
//! | 2  | `str ns`                                     | `u8 exists`                |
//! | 3  | `u64 writer, str ns, u128 kv, str key, bytes value` | empty               |
//! | 4  | `str ns, u128 kv, str key`                   | `u8 present [, bytes value]` |
//! | 5  | `str ns, u128 kv`                            | `u32 n, n × str key`       |
//! | 6  | `str ns, u128 id, bytes data`                | empty                      |
//! | 7  | `str ns, u128 id, u64 offset, u64 len`       | `bytes data`               |
//! | 8  | `str ns, u64 n`                              | `u128 start, u64 count`    |
//! | 9  | empty                                        | `bytes counters-json`      |
//! | 10 | empty                                        | empty                      |

use std::io::{Read, Write};

use crate::wire::{DecodeError, Decoder, Encoder};
use crate::{EngineError, ObjectId, Result, WriterTag};

/// Frames larger than this are refused.
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    NsCreate { ns: String },
    NsExists { ns: String },
    KvPut { writer: WriterTag, ns: String, kv: ObjectId, key: String, value: Vec<u8> },
    KvGet { ns: String, kv: ObjectId, key: String },
    KvList { ns: String, kv: ObjectId },
    BlobWrite { ns: String, id: ObjectId, data: Vec<u8> },
    BlobRead { ns: String, id: ObjectId, offset: u64, len: u64 },
    AllocIds { ns: String, n: u64 },
    Counters,
    ResetCounters,
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        match self {
            Request::NsCreate { ns } => e.u8(1).str(ns),
            Request::NsExists { ns } => e.u8(2).str(ns),
            Request::KvPut { writer, ns, kv, key, value } => {
                e.u8(3).u64(*writer).str(ns).u128(kv.0).str(key).bytes(value)
            }
            Request::KvGet { ns, kv, key } => e.u8(4).str(ns).u128(kv.0).str(key),
            Request::KvList { ns, kv } => e.u8(5).str(ns).u128(kv.0),
            Request::BlobWrite { ns, id, data } => e.u8(6).str(ns).u128(id.0).bytes(data),
            Request::BlobRead { ns, id, offset, len } => {
                e.u8(7).str(ns).u128(id.0).u64(*offset).u64(*len)
            }
            Request::AllocIds { ns, n } => e.u8(8).str(ns).u64(*n),
            Request::Counters => e.u8(9),
            Request::ResetCounters => e.u8(10),
        };
        e.into_inner()
    }

    pub fn decode(body: &[u8]) -> std::result::Result<Request, DecodeError> {
        let mut d = Decoder::new(body);
        let op = d.u8()?;
        let req = match op {
            1 => Request::NsCreate { ns: d.str()?.to_owned() },
            2 => Request::NsExists { ns: d.str()?.to_owned() },
            3 => Request::KvPut {
                writer: d.u64()?,
                ns: d.str()?.to_owned(),
                kv: ObjectId(d.u128()?),
                key: d.str()?.to_owned(),
                value: d.bytes()?.to_vec(),
            },
            4 => Request::KvGet { ns: d.str()?.to_owned(), kv: ObjectId(d.u128()?), key: d.str()?.to_owned() },
            5 => Request::KvList { ns: d.str()?.to_owned(), kv: ObjectId(d.u128()?) },
            6 => Request::BlobWrite { ns: d.str()?.to_owned(), id: ObjectId(d.u128()?), data: d.bytes()?.to_vec() },
            7 => Request::BlobRead {
                ns: d.str()?.to_owned(),
                id: ObjectId(d.u128()?),
                offset: d.u64()?,
                len: d.u64()?,
            },
            8 => Request::AllocIds { ns: d.str()?.to_owned(), n: d.u64()? },
            9 => Request::Counters,
            10 => Request::ResetCounters,
            _ => return Err(DecodeError { what: "op-code", at: 0 }),
        };
        if !d.is_empty() {
            return Err(DecodeError { what: "end of request", at: d.position() });
        }
        Ok(req)
    }
}

pub fn write_frame(w: &mut impl Write, body: &[u8]) -> std::io::Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| std::io::Error::other("frame too large"))?;
    let mut buf = Vec::with_capacity(body.len() + 4);
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(body);
    w.write_all(&buf)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(EngineError::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub(crate) fn ok_body(payload: &[u8]) -> Vec<u8> {
    let mut v = Vec::with_capacity(payload.len() + 1);
    v.push(0);
    v.extend_from_slice(payload);
    v
}

pub(crate) fn err_body(msg: &str) -> Vec<u8> {
    let mut v = Vec::with_capacity(msg.len() + 1);
    v.push(1);
    v.extend_from_slice(msg.as_bytes());
    v
}

/// Splits a response body into its ok payload or a remote error.
pub(crate) fn parse_response(body: &[u8]) -> Result<&[u8]> {
    match body.split_first() {
        Some((0, rest)) => Ok(rest),
        Some((1, rest)) => Err(EngineError::Remote(String::from_utf8_lossy(rest).into_owned())),
        _ => Err(EngineError::Protocol("malformed response".into())),
    }
}
