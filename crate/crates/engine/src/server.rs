use std::io::{BufReader, BufWriter};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use tracing::{debug, warn};

use crate::protocol::{err_body, ok_body, read_frame, write_frame, Request};
use crate::wire::Encoder;
use crate::{ObjectEngine, Result};

/// Serves one engine over a Unix domain socket, one thread per connection.
pub struct EngineServer {
    path: PathBuf,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl EngineServer {
    pub fn spawn(engine: Arc<dyn ObjectEngine>, path: impl AsRef<Path>) -> Result<EngineServer> {
        let path = path.as_ref().to_owned();
        if path.exists() {
            std::fs::remove_file(&path)?;
        }
        let listener = UnixListener::bind(&path)?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop2 = stop.clone();
        let accept = std::thread::Builder::new().name("engine-accept".into()).spawn(move || {
            for conn in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let engine = engine.clone();
                        let _ = std::thread::Builder::new()
                            .name("engine-conn".into())
                            .spawn(move || serve_connection(engine.as_ref(), stream));
                    }
                    Err(e) => warn!(error = %e, "accept failed"),
                }
            }
        })?;
        debug!(path = %path.display(), "engine server listening");
        Ok(EngineServer { path, stop, accept: Some(accept) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        if let Some(handle) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            // wake the accept loop
            let _ = UnixStream::connect(&self.path);
            let _ = handle.join();
            let _ = std::fs::remove_file(&self.path);
        }
    }
}

impl Drop for EngineServer {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

fn serve_connection(engine: &dyn ObjectEngine, stream: UnixStream) {
    let mut reader = BufReader::new(match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    });
    let mut writer = BufWriter::new(stream);
    loop {
        let body = match read_frame(&mut reader) {
            Ok(Some(b)) => b,
            Ok(None) => return,
            Err(e) => {
                debug!(error = %e, "connection closed");
                return;
            }
        };
        let response = match Request::decode(&body) {
            Ok(req) => match dispatch(engine, req) {
                Ok(payload) => ok_body(&payload),
                Err(e) => err_body(&e.to_string()),
            },
            Err(e) => err_body(&format!("bad request: {e}")),
        };
        if write_frame(&mut writer, &response).is_err() {
            return;
        }
    }
}

fn dispatch(engine: &dyn ObjectEngine, req: Request) -> Result<Vec<u8>> {
    let mut e = Encoder::new();
    match req {
        Request::NsCreate { ns } => {
            e.u8(engine.ns_create_if_absent(&ns)? as u8);
        }
        Request::NsExists { ns } => {
            e.u8(engine.ns_exists(&ns)? as u8);
        }
        Request::KvPut { writer, ns, kv, key, value } => engine.kv_put(writer, &ns, kv, &key, &value)?,
        Request::KvGet { ns, kv, key } => match engine.kv_get(&ns, kv, &key)? {
            Some(v) => {
                e.u8(1).bytes(&v);
            }
            None => {
                e.u8(0);
            }
        },
        Request::KvList { ns, kv } => {
            let keys = engine.kv_list(&ns, kv)?;
            e.u32(keys.len() as u32);
            for k in &keys {
                e.str(k);
            }
        }
        Request::BlobWrite { ns, id, data } => engine.blob_write(&ns, id, &data)?,
        Request::BlobRead { ns, id, offset, len } => {
            e.bytes(&engine.blob_read(&ns, id, offset, len)?);
        }
        Request::AllocIds { ns, n } => {
            let r = engine.allocate_ids(&ns, n)?;
            e.u128(r.start).u64(r.count);
        }
        Request::Counters => {
            let c = engine.counters_snapshot()?;
            e.bytes(&serde_json::to_vec(&c).expect("counters serialise"));
        }
        Request::ResetCounters => engine.reset_counters()?,
    }
    Ok(e.into_inner())
}
