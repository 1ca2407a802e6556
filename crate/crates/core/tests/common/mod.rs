#![allow(dead_code)]

pub mod trace;

use std::sync::Arc;

use fieldstore::{FieldStore, Identifier, Schema};
use fieldstore_engine::Engine;

pub fn schema() -> Schema {
    Schema::parse("dataset: class, date\ncollocation: type, levtype\nelement: step, param\n").unwrap()
}

pub fn id(s: &str) -> Identifier {
    s.parse().unwrap()
}

pub fn field(kind: &str, step: u32, param: &str) -> Identifier {
    id(&format!("class=od,date=20231201,type={kind},levtype=sfc,step={step},param={param}"))
}

pub fn fs_store(dir: &std::path::Path) -> FieldStore {
    FieldStore::fs(dir, schema()).unwrap()
}

pub fn obj_store() -> (FieldStore, Arc<Engine>) {
    let engine = Arc::new(Engine::in_memory());
    (FieldStore::obj(engine.clone(), schema()), engine)
}

/// Payload of `len` bytes whose first 8 bytes are `version` and whose last 8
/// are a digest of everything before them.
pub fn versioned(version: u64, len: usize) -> Vec<u8> {
    assert!(len >= 16);
    let mut v = Vec::with_capacity(len);
    v.extend_from_slice(&version.to_le_bytes());
    let mut x = version.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    while v.len() < len - 8 {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        v.push(x as u8);
    }
    let sum = fnv(&v);
    v.extend_from_slice(&sum.to_le_bytes());
    v
}

/// Version carried by an intact `versioned` payload.
pub fn check_versioned(bytes: &[u8]) -> Option<u64> {
    if bytes.len() < 16 {
        return None;
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv(body).to_le_bytes() != tail {
        return None;
    }
    let version = u64::from_le_bytes(body[..8].try_into().unwrap());
    (versioned(version, bytes.len()) == bytes).then_some(version)
}

fn fnv(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}
