use std::io::{BufReader, BufWriter};
use std::os::unix::net::UnixStream;
use std::path::Path;
use std::sync::Mutex;

use crate::protocol::{parse_response, read_frame, write_frame, Request};
use crate::wire::Decoder;
use crate::{EngineError, EngineOpCounters, IdRange, ObjectEngine, ObjectId, Result, WriterTag};

struct Conn {
    reader: BufReader<UnixStream>,
    writer: BufWriter<UnixStream>,
}

/// Client of an [`EngineServer`](crate::EngineServer). Requests from
/// concurrent threads are serialised over one connection.
pub struct RemoteEngine {
    conn: Mutex<Conn>,
}

fn decode_err(e: crate::wire::DecodeError) -> EngineError {
    EngineError::Protocol(e.to_string())
}

impl RemoteEngine {
    pub fn connect(path: impl AsRef<Path>) -> Result<RemoteEngine> {
        let stream = UnixStream::connect(path)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(RemoteEngine { conn: Mutex::new(Conn { reader, writer: BufWriter::new(stream) }) })
    }

    fn call(&self, req: &Request) -> Result<Vec<u8>> {
        let mut conn = self.conn.lock().unwrap();
        write_frame(&mut conn.writer, &req.encode())?;
        let body = read_frame(&mut conn.reader)?
            .ok_or_else(|| EngineError::Protocol("server closed the connection".into()))?;
        parse_response(&body).map(<[u8]>::to_vec)
    }
}

impl ObjectEngine for RemoteEngine {
    fn ns_create_if_absent(&self, ns: &str) -> Result<bool> {
        let r = self.call(&Request::NsCreate { ns: ns.into() })?;
        Ok(Decoder::new(&r).u8().map_err(decode_err)? != 0)
    }

    fn ns_exists(&self, ns: &str) -> Result<bool> {
        let r = self.call(&Request::NsExists { ns: ns.into() })?;
        Ok(Decoder::new(&r).u8().map_err(decode_err)? != 0)
    }

    fn kv_put(&self, writer: WriterTag, ns: &str, kv: ObjectId, key: &str, value: &[u8]) -> Result<()> {
        self.call(&Request::KvPut { writer, ns: ns.into(), kv, key: key.into(), value: value.to_vec() })?;
        Ok(())
    }

    fn kv_get(&self, ns: &str, kv: ObjectId, key: &str) -> Result<Option<Vec<u8>>> {
        let r = self.call(&Request::KvGet { ns: ns.into(), kv, key: key.into() })?;
        let mut d = Decoder::new(&r);
        Ok(match d.u8().map_err(decode_err)? {
            0 => None,
            _ => Some(d.bytes().map_err(decode_err)?.to_vec()),
        })
    }

    fn kv_list(&self, ns: &str, kv: ObjectId) -> Result<Vec<String>> {
        let r = self.call(&Request::KvList { ns: ns.into(), kv })?;
        let mut d = Decoder::new(&r);
        let n = d.u32().map_err(decode_err)?;
        (0..n).map(|_| d.str().map(str::to_owned).map_err(decode_err)).collect()
    }

    fn blob_write(&self, ns: &str, id: ObjectId, bytes: &[u8]) -> Result<()> {
        self.call(&Request::BlobWrite { ns: ns.into(), id, data: bytes.to_vec() })?;
        Ok(())
    }

    fn blob_read(&self, ns: &str, id: ObjectId, offset: u64, len: u64) -> Result<Vec<u8>> {
        let r = self.call(&Request::BlobRead { ns: ns.into(), id, offset, len })?;
        Ok(Decoder::new(&r).bytes().map_err(decode_err)?.to_vec())
    }

    fn allocate_ids(&self, ns: &str, n: u64) -> Result<IdRange> {
        let r = self.call(&Request::AllocIds { ns: ns.into(), n })?;
        let mut d = Decoder::new(&r);
        Ok(IdRange { start: d.u128().map_err(decode_err)?, count: d.u64().map_err(decode_err)? })
    }

    fn counters_snapshot(&self) -> Result<EngineOpCounters> {
        let r = self.call(&Request::Counters)?;
        let json = Decoder::new(&r).bytes().map_err(decode_err)?.to_vec();
        serde_json::from_slice(&json).map_err(|e| EngineError::Protocol(e.to_string()))
    }

    fn reset_counters(&self) -> Result<()> {
        self.call(&Request::ResetCounters)?;
        Ok(())
    }
}
