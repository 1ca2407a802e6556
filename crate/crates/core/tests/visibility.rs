mod common;

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use common::{check_versioned, field, fs_store, obj_store, versioned};
use fieldstore::FieldStore;

/// One writer keeps replacing 4 fields with newer versions while readers
/// poll them through fresh sessions. Readers must see nothing or a complete
/// version, and versions never go backwards.
fn replacements_are_atomic(store: &FieldStore) {
    let ids: Vec<_> = (0..4).map(|s| field("fc", s, "t")).collect();
    let done = AtomicBool::new(false);
    let published = AtomicU64::new(0);
    std::thread::scope(|scope| {
        scope.spawn(|| {
            let mut w = store.session();
            for version in 1..=60u64 {
                for id in &ids {
                    w.archive(id, &versioned(version, 4096 + version as usize)).unwrap();
                }
                w.flush().unwrap();
                published.store(version, Ordering::SeqCst);
            }
            w.close().unwrap();
            done.store(true, Ordering::SeqCst);
        });
        for _ in 0..3 {
            scope.spawn(|| {
                let mut last = vec![0u64; ids.len()];
                while !done.load(Ordering::SeqCst) {
                    let floor = published.load(Ordering::SeqCst);
                    let mut r = store.session();
                    for (i, id) in ids.iter().enumerate() {
                        let h = r.retrieve(std::slice::from_ref(id)).unwrap();
                        if h.is_empty() {
                            assert_eq!(floor, 0, "field vanished after version {floor} was flushed");
                            continue;
                        }
                        let bytes = h.read().unwrap();
                        let v = check_versioned(&bytes).expect("torn or foreign payload");
                        assert!(v >= last[i] && v >= floor, "version went from {} to {v} (floor {floor})", last[i]);
                        last[i] = v;
                    }
                }
            });
        }
    });
}

#[test]
fn fs_replacements_are_atomic() {
    let dir = tempfile::tempdir().unwrap();
    replacements_are_atomic(&fs_store(dir.path()));
}

#[test]
fn obj_replacements_are_atomic() {
    let (store, _engine) = obj_store();
    replacements_are_atomic(&store);
}
