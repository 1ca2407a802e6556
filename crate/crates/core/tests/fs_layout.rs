mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use common::{field, fs_store, id, schema};
use fieldstore::backend_fs::format::{parse_toc, TocRecord};
use fieldstore::{Error, FieldStore, PartialIdentifier, Schema};

const DATASET: &str = "class=od,date=20231201";

fn dataset_dir(root: &Path) -> PathBuf {
    root.join(DATASET)
}

fn toc(root: &Path) -> Vec<TocRecord> {
    let path = dataset_dir(root).join("toc");
    parse_toc(&std::fs::read(&path).unwrap(), &path).unwrap()
}

fn kinds(records: &[TocRecord]) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        let k = match r {
            TocRecord::Init => "init",
            TocRecord::SubtocPtr { .. } => "subtoc",
            TocRecord::FullIndex { .. } => "full",
            TocRecord::Mask { .. } => "mask",
        };
        *m.entry(k).or_default() += 1;
    }
    m
}

fn files_by_ext(root: &Path) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for e in std::fs::read_dir(dataset_dir(root)).unwrap() {
        let name = e.unwrap().file_name().into_string().unwrap();
        let ext = match name.rsplit_once('.') {
            Some((_, ext)) => ext.to_owned(),
            None => name,
        };
        *m.entry(ext).or_default() += 1;
    }
    m
}

fn everything() -> PartialIdentifier {
    DATASET.parse().unwrap()
}

#[test]
fn four_files_per_session_plus_toc_and_schema() {
    for shared_collocation in [false, true] {
        let dir = tempfile::tempdir().unwrap();
        let store = fs_store(dir.path());
        let p = 5;
        for s in 0..p {
            let kind = if shared_collocation { "fc".to_owned() } else { format!("k{s}") };
            let mut w = store.session();
            for step in 1..=3 {
                w.archive(&field(&kind, step, "t"), b"data").unwrap();
                w.flush().unwrap();
            }
            w.close().unwrap();
        }
        let files = files_by_ext(dir.path());
        let expected: BTreeMap<String, usize> =
            [("data", p), ("index", p), ("full", p), ("subtoc", p), ("toc", 1), ("schema", 1)]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect();
        assert_eq!(files, expected, "shared collocation: {shared_collocation}");
        assert_eq!(files.values().sum::<usize>(), 4 * p + 2);
    }
}

#[test]
fn toc_records_follow_flushes_and_close() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let mut w = store.session();
    w.archive(&field("fc", 1, "t"), b"1").unwrap();
    w.archive(&field("an", 1, "t"), b"1").unwrap();
    w.flush().unwrap();
    assert_eq!(kinds(&toc(dir.path())), [("init", 1), ("subtoc", 1)].into_iter().collect());
    let toc_len = std::fs::metadata(dataset_dir(dir.path()).join("toc")).unwrap().len();
    let subtoc_len = |dir: &Path| -> u64 {
        std::fs::read_dir(dataset_dir(dir))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "subtoc"))
            .map(|p| std::fs::metadata(p).unwrap().len())
            .sum()
    };
    let before = subtoc_len(dir.path());

    w.archive(&field("fc", 2, "t"), b"2").unwrap();
    w.flush().unwrap();
    assert_eq!(std::fs::metadata(dataset_dir(dir.path()).join("toc")).unwrap().len(), toc_len);
    assert!(subtoc_len(dir.path()) > before);

    w.close().unwrap();
    assert_eq!(
        kinds(&toc(dir.path())),
        [("init", 1), ("subtoc", 1), ("full", 2), ("mask", 1)].into_iter().collect()
    );
}

#[test]
fn every_session_publishes_one_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let mut sessions: Vec<_> = (0..8).map(|_| store.session()).collect();
    for (i, s) in sessions.iter_mut().enumerate() {
        s.archive(&field("fc", i as u32, "t"), b"x").unwrap();
    }
    for s in &mut sessions {
        s.flush().unwrap();
        s.flush().unwrap();
    }
    assert_eq!(kinds(&toc(dir.path()))["subtoc"], 8);
}

#[test]
fn preload_reads_subtocs_until_writers_close() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let writers = 4;
    let mut sessions: Vec<_> = (0..writers).map(|_| store.session()).collect();
    for (i, s) in sessions.iter_mut().enumerate() {
        for step in 0..3 {
            s.archive(&field("fc", 10 * i as u32 + step, "t"), b"x").unwrap();
            s.flush().unwrap();
        }
    }

    let t0 = store.io();
    let before = store.session().list(&everything()).unwrap();
    let open = store.io().since(&t0);
    assert_eq!((open.toc_reads, open.subtoc_reads), (1, writers as u64));
    assert_eq!(open.index_loads, 3 * writers as u64);

    for s in &mut sessions {
        s.close().unwrap();
    }
    let t1 = store.io();
    let after = store.session().list(&everything()).unwrap();
    let closed = store.io().since(&t1);
    assert_eq!((closed.toc_reads, closed.subtoc_reads), (1, 0));
    assert_eq!(closed.index_loads, writers as u64);
    assert_eq!(before, after);
}

#[test]
fn empty_dataset_preloads_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let t0 = store.io();
    assert!(store.session().list(&everything()).unwrap().is_empty());
    assert_eq!(store.io().since(&t0).toc_reads, 0);
}

#[test]
fn consecutive_fields_merge_into_one_read() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let mut w = store.session();
    let ids: Vec<_> = (0..5).map(|s| field("fc", s, "t")).collect();
    let mut expected = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let data = vec![i as u8; 1000 + i];
        w.archive(id, &data).unwrap();
        expected.extend(data);
    }
    w.close().unwrap();

    let mut r = store.session();
    let handle = r.retrieve(&ids).unwrap();
    assert_eq!(handle.segments().len(), 1);
    let t0 = store.io();
    assert_eq!(handle.read().unwrap(), expected);
    let io = store.io().since(&t0);
    assert_eq!((io.data_opens, io.data_reads), (1, 1));

    let unmerged = r.retrieve_unmerged(&ids).unwrap();
    let t1 = store.io();
    assert_eq!(unmerged.read().unwrap(), expected);
    let io = store.io().since(&t1);
    assert_eq!((io.data_opens, io.data_reads), (1, 5));

    // reversed order is not contiguous
    let reversed: Vec<_> = ids.iter().rev().cloned().collect();
    assert_eq!(r.retrieve(&reversed).unwrap().segments().len(), 5);
}

#[test]
fn fields_of_distinct_collocations_live_in_distinct_files() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let mut w = store.session();
    w.archive(&field("fc", 1, "t"), b"fc").unwrap();
    w.archive(&field("an", 1, "t"), b"an").unwrap();
    w.flush().unwrap();
    let h = store.session().retrieve(&[field("fc", 1, "t"), field("an", 1, "t")]).unwrap();
    assert_eq!(h.segments().len(), 2);
    assert_ne!(h.segments()[0].uri, h.segments()[1].uri);
    assert_eq!(h.read().unwrap(), b"fcan");
}

#[test]
fn frozen_clock_still_gives_unique_names() {
    let dir = tempfile::tempdir().unwrap();
    let clock: fieldstore::backend_fs::Clock = Arc::new(|| 7);
    let a = FieldStore::fs_with_clock(dir.path(), schema(), clock.clone()).unwrap();
    let b = FieldStore::fs_with_clock(dir.path(), schema(), clock).unwrap();
    for store in [&a, &b, &a, &b] {
        let mut w = store.session();
        w.archive(&field("fc", 1, "t"), b"x").unwrap();
        w.close().unwrap();
    }
    assert_eq!(files_by_ext(dir.path())["data"], 4);
    assert_eq!(kinds(&toc(dir.path()))["full"], 4);
}

#[test]
fn foreign_schema_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = fs_store(dir.path()).session();
    w.archive(&field("fc", 1, "t"), b"x").unwrap();
    w.close().unwrap();
    let other = Schema::parse("dataset: class, date\ncollocation: type\nelement: levtype, step, param\n").unwrap();
    let store = FieldStore::fs(dir.path(), other).unwrap();
    let err = store.session().archive(&field("fc", 1, "t"), b"x").unwrap_err();
    assert!(matches!(err, Error::SchemaMismatch(_)), "{err}");
}

#[test]
fn short_index_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let mut w = store.session();
    w.archive(&field("fc", 1, "t"), b"kept").unwrap();
    w.flush().unwrap();
    let mut other = store.session();
    other.archive(&field("an", 2, "t"), b"lost").unwrap();
    other.flush().unwrap();
    drop(other);

    let indexes: Vec<_> = std::fs::read_dir(dataset_dir(dir.path()))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "index"))
        .collect();
    assert_eq!(indexes.len(), 2);
    for idx in indexes.iter().filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("type=an")) {
        std::fs::OpenOptions::new().write(true).open(idx).unwrap().set_len(3).unwrap();
    }
    let mut r = store.session();
    let listed = r.list(&everything()).unwrap();
    assert_eq!(listed.iter().map(|e| e.identifier.clone()).collect::<Vec<_>>(), [field("fc", 1, "t")]);
    assert!(r.retrieve(&[field("an", 2, "t")]).unwrap().is_empty());
}

#[test]
fn torn_toc_tail_is_ignored_and_bad_checksum_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let mut w = store.session();
    w.archive(&field("fc", 1, "t"), b"x").unwrap();
    w.flush().unwrap();
    let path = dataset_dir(dir.path()).join("toc");
    let good = std::fs::read(&path).unwrap();

    let mut torn = good.clone();
    torn.extend_from_slice(&[200, 0, 0, 0, 2, 1]);
    std::fs::write(&path, &torn).unwrap();
    assert_eq!(store.session().list(&everything()).unwrap().len(), 1);

    let mut bad = good.clone();
    let last = bad.len() - 1;
    bad[last] ^= 0xff;
    std::fs::write(&path, &bad).unwrap();
    let err = store.session().list(&everything()).unwrap_err();
    assert!(matches!(err, Error::CorruptCatalogue { .. }), "{err}");
}

#[test]
fn oversized_full_index_record_fails_close() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let mut w = store.session();
    for step in 0..1500 {
        w.archive(&field("fc", 100_000 + step, "t"), b"x").unwrap();
    }
    w.flush().unwrap();
    let err = w.close().unwrap_err();
    assert!(matches!(err, Error::RecordTooLarge { limit: 4096, .. }), "{err}");
    // the flushed sub-TOC still serves every field
    assert_eq!(store.session().list(&everything()).unwrap().len(), 1500);
}

#[test]
fn dataset_directory_is_named_by_its_key() {
    let dir = tempfile::tempdir().unwrap();
    let store = fs_store(dir.path());
    let mut w = store.session();
    w.archive(&id("class=rd,date=19991231,type=fc,levtype=pl,step=0,param=z"), b"z").unwrap();
    w.flush().unwrap();
    assert!(dir.path().join("class=rd,date=19991231").join("toc").is_file());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("class=rd,date=19991231/schema")).unwrap(),
        schema().to_text()
    );
}
