use std::collections::BTreeMap;

use fieldstore_engine::{Engine, ObjectEngine, ObjectId};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Step {
    Put(u8, u8, Vec<u8>),
    Get(u8, u8),
    List(u8),
    Blob(u8, Vec<u8>),
    Read(u8, u8, u8),
    Reopen,
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        (0..3u8, 0..6u8, proptest::collection::vec(any::<u8>(), 0..32)).prop_map(|(kv, k, v)| Step::Put(kv, k, v)),
        (0..3u8, 0..6u8).prop_map(|(kv, k)| Step::Get(kv, k)),
        (0..3u8).prop_map(Step::List),
        (0..4u8, proptest::collection::vec(any::<u8>(), 1..48)).prop_map(|(id, v)| Step::Blob(id, v)),
        (0..4u8, 0..48u8, 0..48u8).prop_map(|(id, o, l)| Step::Read(id, o, l)),
        Just(Step::Reopen),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The durable engine behaves like a pair of maps, across reopens.
    #[test]
    fn engine_matches_map_model(steps in proptest::collection::vec(step(), 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let mut engine = Engine::open_dir(dir.path()).unwrap();
        engine.ns_create_if_absent("ns").unwrap();
        let mut kvs: BTreeMap<(u8, String), Vec<u8>> = BTreeMap::new();
        let mut blobs: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
        for s in steps {
            match s {
                Step::Put(kv, k, v) => {
                    engine.kv_put(1, "ns", ObjectId(kv as u128), &k.to_string(), &v).unwrap();
                    kvs.insert((kv, k.to_string()), v);
                }
                Step::Get(kv, k) => {
                    let got = engine.kv_get("ns", ObjectId(kv as u128), &k.to_string()).unwrap();
                    prop_assert_eq!(got.as_ref(), kvs.get(&(kv, k.to_string())));
                }
                Step::List(kv) => {
                    let want: Vec<String> = kvs.keys().filter(|(o, _)| *o == kv).map(|(_, k)| k.clone()).collect();
                    prop_assert_eq!(engine.kv_list("ns", ObjectId(kv as u128)).unwrap(), want);
                }
                Step::Blob(id, v) => {
                    engine.blob_write("ns", ObjectId(100 + id as u128), &v).unwrap();
                    blobs.insert(id, v);
                }
                Step::Read(id, o, l) => {
                    let got = engine.blob_read("ns", ObjectId(100 + id as u128), o as u64, l as u64);
                    match blobs.get(&id) {
                        Some(b) if (o as usize + l as usize) <= b.len() => {
                            prop_assert_eq!(got.unwrap(), b[o as usize..(o + l) as usize].to_vec())
                        }
                        _ => prop_assert!(got.is_err()),
                    }
                }
                Step::Reopen => {
                    drop(engine);
                    engine = Engine::open_dir(dir.path()).unwrap();
                    prop_assert!(engine.ns_exists("ns").unwrap());
                }
            }
        }
    }
}
