#![allow(dead_code)]

/// Self-describing payload: an 8-byte version followed by bytes derived from it.
pub fn versioned(version: u64, len: usize) -> Vec<u8> {
    let mut v = version.to_le_bytes().to_vec();
    v.extend((0..len).map(|i| (version.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64) >> 3) as u8));
    v
}

/// Returns the version if `bytes` is an intact payload.
pub fn check_versioned(bytes: &[u8]) -> Option<u64> {
    let version = u64::from_le_bytes(bytes.get(..8)?.try_into().ok()?);
    (versioned(version, bytes.len() - 8) == bytes).then_some(version)
}
