//! Synthetic weather-field identifiers and self-verifying payloads.

use fieldstore::{Identifier, PartialIdentifier, Schema};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Default split: one collocation per (type, levtype), every writer
/// indexes into it.
pub const STANDARD_SCHEMA: &str = "\
dataset: class, stream, expver, date, time
collocation: type, levtype
element: step, levelist, number, param
";

/// Member and level in the collocation, so concurrent writers of distinct
/// members or levels never share an index.
pub const CONTENTION_SCHEMA: &str = "\
dataset: class, stream, expver, date, time
collocation: type, levtype, number, levelist
element: step, param
";

/// Member in the collocation only: one index per writer node, whose axes
/// span steps, levels and parameters.
pub const MEMBER_SCHEMA: &str = "\
dataset: class, stream, expver, date, time
collocation: type, levtype, number
element: step, levelist, param
";

pub fn builtin_schema(name: &str) -> Option<Schema> {
    let text = match name {
        "standard" => STANDARD_SCHEMA,
        "contention" => CONTENTION_SCHEMA,
        "member" => MEMBER_SCHEMA,
        _ => return None,
    };
    Some(Schema::parse(text).expect("builtin schema"))
}

const PARAMS: [&str; 10] = ["t", "u", "v", "q", "w", "z", "r", "d", "vo", "o3"];

pub fn param_name(param: u32) -> String {
    match PARAMS.get(param as usize - 1) {
        Some(p) => (*p).to_owned(),
        None => format!("p{param}"),
    }
}

/// The fixed part of every generated identifier.
pub fn template() -> Identifier {
    Identifier::from_pairs([
        ("class", "od"),
        ("stream", "oper"),
        ("expver", "0001"),
        ("date", "20231201"),
        ("time", "1200"),
        ("type", "ef"),
        ("levtype", "pl"),
    ])
    .expect("template")
}

/// Identifier of one field of the grid. All indices start at 1.
pub fn gen_identifier(template: &Identifier, member: u32, step: u32, param: u32, level: u32) -> Identifier {
    let mut id = template.clone();
    for (k, v) in [
        ("number", member.to_string()),
        ("step", step.to_string()),
        ("param", param_name(param)),
        ("levelist", level.to_string()),
    ] {
        id.insert(k, v).expect("grid keywords are not in the template");
    }
    id
}

/// Every field of `template` at `step`, across all members and levels.
pub fn step_partial(template: &Identifier, step: u32) -> PartialIdentifier {
    let mut p = PartialIdentifier::from_identifier(template);
    p = p.with_value("step", &step.to_string()).expect("step");
    p
}

/// Deterministic payload of `size` bytes for one version of a field. The
/// first 8 bytes carry the version when the field is large enough. Key order
/// does not matter, so listed and generated identifiers agree.
pub fn payload(id: &Identifier, version: u64, size: usize) -> Vec<u8> {
    let mut pairs: Vec<(&str, &str)> = id.iter().collect();
    pairs.sort_unstable();
    let mut h = Sha256::new();
    for (k, v) in pairs {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b",");
    }
    h.update(version.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let mut bytes = vec![0u8; size];
    rng.fill_bytes(&mut bytes);
    if size >= 8 {
        bytes[..8].copy_from_slice(&version.to_le_bytes());
    }
    bytes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// A complete payload of the field, at this version.
    Intact(u64),
    /// Anything else: wrong length, another field's bytes, or a mix.
    Torn,
}

pub fn check_payload(id: &Identifier, bytes: &[u8], size: usize) -> Verdict {
    if bytes.len() != size {
        return Verdict::Torn;
    }
    let version = if size >= 8 { u64::from_le_bytes(bytes[..8].try_into().unwrap()) } else { 0 };
    if payload(id, version, size) == bytes {
        Verdict::Intact(version)
    } else {
        Verdict::Torn
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn first_field_is_fully_specified() {
        let id = gen_identifier(&template(), 1, 1, 1, 1);
        assert_eq!(
            id.canonical(),
            "class=od,stream=oper,expver=0001,date=20231201,time=1200,type=ef,levtype=pl,number=1,step=1,param=t,levelist=1"
        );
        for name in ["standard", "contention", "member"] {
            let schema = builtin_schema(name).unwrap();
            let key = schema.split(&id).unwrap();
            assert_eq!(key.join().len(), 11, "{name}");
        }
    }

    #[test]
    fn grid_identifiers_are_distinct() {
        let t = template();
        let (m, s, p, l) = (3, 7, 12, 5);
        let mut seen = HashSet::new();
        for member in 1..=m {
            for step in 1..=s {
                for param in 1..=p {
                    for level in 1..=l {
                        assert!(seen.insert(gen_identifier(&t, member, step, param, level).canonical()));
                    }
                }
            }
        }
        assert_eq!(seen.len(), (m * s * p * l) as usize);
    }

    #[test]
    fn payloads_verify() {
        let t = template();
        let a = gen_identifier(&t, 1, 1, 1, 1);
        let b = gen_identifier(&t, 1, 1, 1, 2);
        let pa = payload(&a, 3, 256);
        assert_eq!(pa, payload(&a, 3, 256));
        assert_ne!(pa, payload(&a, 4, 256));
        assert_eq!(check_payload(&a, &pa, 256), Verdict::Intact(3));
        assert_eq!(check_payload(&b, &pa, 256), Verdict::Torn);
        assert_eq!(check_payload(&a, &pa[..255], 256), Verdict::Torn);
        let mut mixed = pa.clone();
        mixed[100..].copy_from_slice(&payload(&a, 4, 256)[100..]);
        assert_eq!(check_payload(&a, &mixed, 256), Verdict::Torn);
        let tiny = payload(&a, 0, 3);
        assert_eq!(check_payload(&a, &tiny, 3), Verdict::Intact(0));
    }

    #[test]
    fn payload_ignores_key_order() {
        let a = gen_identifier(&template(), 2, 3, 4, 5);
        let normalized = builtin_schema("standard").unwrap().normalize(&a).unwrap();
        assert_ne!(a.canonical(), normalized.canonical());
        assert_eq!(payload(&a, 7, 64), payload(&normalized, 7, 64));
    }

    #[test]
    fn step_partial_matches_one_step() {
        let t = template();
        let p = step_partial(&t, 1);
        assert!(p.matches(&gen_identifier(&t, 4, 1, 2, 3)));
        assert!(!p.matches(&gen_identifier(&t, 4, 2, 2, 3)));
    }
}
