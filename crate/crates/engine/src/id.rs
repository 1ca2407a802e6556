use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// 128-bit object identifier, rendered as 32 lowercase hex digits.
///
/// Id 0 is reserved for the primary key-value of a namespace. Allocated ids
/// count up from 1; ids derived from names by [`ObjectId::digest`] carry the
/// top bit, so the two families never meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u128);

const HASHED_BIT: u128 = 1 << 127;

impl ObjectId {
    pub const ZERO: ObjectId = ObjectId(0);

    /// Deterministic id from a sequence of name parts (truncated SHA-256).
    pub fn digest<S: AsRef<str>>(parts: &[S]) -> ObjectId {
        let mut h = Sha256::new();
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                h.update([0x1f]);
            }
            h.update(p.as_ref().as_bytes());
        }
        let out = h.finalize();
        let mut b = [0u8; 16];
        b.copy_from_slice(&out[..16]);
        ObjectId(u128::from_be_bytes(b) | HASHED_BIT)
    }

    pub fn is_digest(&self) -> bool {
        self.0 & HASHED_BIT != 0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for ObjectId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u128::from_str_radix(s, 16).map(ObjectId)
    }
}

/// Contiguous block of allocated ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdRange {
    pub start: u128,
    pub count: u64,
}

impl IdRange {
    pub fn end(&self) -> u128 {
        self.start + self.count as u128
    }

    pub fn contains(&self, id: u128) -> bool {
        id >= self.start && id < self.end()
    }

    pub fn overlaps(&self, other: &IdRange) -> bool {
        self.start < other.end() && other.start < self.end()
    }

    pub fn iter(&self) -> impl Iterator<Item = ObjectId> {
        (self.start..self.end()).map(ObjectId)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_roundtrip() {
        let id = ObjectId(0xabc);
        assert_eq!(id.to_string(), "00000000000000000000000000000abc");
        assert_eq!(id.to_string().parse::<ObjectId>().unwrap(), id);
    }

    #[test]
    fn digest_is_deterministic_and_tagged() {
        let a = ObjectId::digest(&["type=ef,levtype=sfc"]);
        assert_eq!(a, ObjectId::digest(&["type=ef,levtype=sfc"]));
        assert!(a.is_digest());
        assert_ne!(a, ObjectId::digest(&["type=ef,levtype=pl"]));
        // part boundaries matter
        assert_ne!(ObjectId::digest(&["ab", "c"]), ObjectId::digest(&["a", "bc"]));
    }

    #[test]
    fn range_overlap() {
        let a = IdRange { start: 1, count: 10 };
        let b = IdRange { start: 11, count: 5 };
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&IdRange { start: 10, count: 1 }));
        assert_eq!(a.iter().count(), 10);
    }
}
