mod common;

use std::sync::{Arc, Barrier};

use common::{field, fs_store};
use fieldstore::backend_fs::format::{parse_toc, TocRecord};

#[test]
fn simultaneous_first_flushes_leave_intact_records() {
    for _ in 0..10 {
        let dir = tempfile::tempdir().unwrap();
        let store = fs_store(dir.path());
        let n = 16;
        let barrier = Arc::new(Barrier::new(n));
        std::thread::scope(|scope| {
            for i in 0..n {
                let store = store.clone();
                let barrier = barrier.clone();
                scope.spawn(move || {
                    let mut s = store.session();
                    s.archive(&field("fc", i as u32, "t"), &[i as u8; 64]).unwrap();
                    barrier.wait();
                    s.flush().unwrap();
                });
            }
        });
        let path = dir.path().join("class=od,date=20231201/toc");
        let records = parse_toc(&std::fs::read(&path).unwrap(), &path).unwrap();
        let ptrs: std::collections::HashSet<_> = records
            .iter()
            .filter_map(|r| match r {
                TocRecord::SubtocPtr { subtoc } => Some(subtoc.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(ptrs.len(), n);
        assert_eq!(records.len(), n + 1);
        assert_eq!(store.session().list(&"class=od,date=20231201".parse().unwrap()).unwrap().len(), n);
    }
}
