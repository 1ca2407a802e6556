//! Randomized API traces replayed against a store and checked against a
//! naive map oracle.
//!
//! Writers own disjoint identifiers (`number` is the writer index), so the
//! version of a field only depends on the order of its writer's archives.
//! The oracle tracks two views: everything archived (object backend) and
//! everything flushed (filesystem backend).

use std::collections::{BTreeMap, BTreeSet};

use fieldstore::{BackendKind, FieldStore, Identifier, PartialIdentifier, Schema, Session};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const WRITERS: usize = 3;
pub const MAX_OPS: usize = 50;

pub fn trace_schema() -> Schema {
    Schema::parse("dataset: class, date\ncollocation: type, number\nelement: step, param\n").unwrap()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Field {
    pub date: u8,
    pub kind: u8,
    pub step: u8,
    pub param: u8,
}

impl Field {
    pub fn identifier(&self, writer: usize) -> Identifier {
        Identifier::from_pairs([
            ("class", "od".to_owned()),
            ("date", format!("2023120{}", self.date)),
            ("type", ["fc", "an"][self.kind as usize].to_owned()),
            ("number", writer.to_string()),
            ("step", self.step.to_string()),
            ("param", ["t", "u"][self.param as usize].to_owned()),
        ])
        .unwrap()
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Archive { writer: usize, field: Field, payload: Vec<u8> },
    Flush { writer: usize },
    Close { writer: usize },
    Retrieve { query: Vec<(usize, Field)> },
    List { date: u8, kinds: Option<Vec<u8>>, steps: Option<Vec<u8>>, writers: Option<Vec<usize>> },
}

fn field(rng: &mut StdRng) -> Field {
    Field { date: rng.random_range(1..3), kind: rng.random_range(0..2), step: rng.random_range(1..4), param: rng.random_range(0..2) }
}

fn subset<T>(rng: &mut StdRng, all: impl Iterator<Item = T>) -> Option<Vec<T>> {
    if rng.random_bool(0.5) {
        return None;
    }
    let mut v: Vec<T> = all.filter(|_| rng.random_bool(0.5)).collect();
    if v.is_empty() {
        return None;
    }
    v.truncate(3);
    Some(v)
}

pub fn generate(seed: u64) -> Vec<Op> {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.random_range(1..=MAX_OPS);
    let mut ops = Vec::with_capacity(n);
    for i in 0..n {
        let roll = rng.random_range(0..100);
        let writer = rng.random_range(0..WRITERS);
        ops.push(match roll {
            0..=44 => {
                let len = rng.random_range(1..96);
                let mut payload = vec![0u8; len];
                rng.fill(&mut payload[..]);
                payload[0] = i as u8;
                Op::Archive { writer, field: field(&mut rng), payload }
            }
            45..=62 => Op::Flush { writer },
            63..=69 => Op::Close { writer },
            70..=84 => {
                let k = rng.random_range(1..5);
                Op::Retrieve { query: (0..k).map(|_| (rng.random_range(0..WRITERS), field(&mut rng))).collect() }
            }
            _ => Op::List {
                date: rng.random_range(1..3),
                kinds: subset(&mut rng, 0..2u8),
                steps: subset(&mut rng, 1..4u8),
                writers: subset(&mut rng, 0..WRITERS),
            },
        });
    }
    ops
}

fn list_partial(date: u8, kinds: &Option<Vec<u8>>, steps: &Option<Vec<u8>>, writers: &Option<Vec<usize>>) -> PartialIdentifier {
    let mut p = PartialIdentifier::new().with_value("class", "od").unwrap().with_value("date", &format!("2023120{date}")).unwrap();
    if let Some(k) = kinds {
        p = p.with_values("type", k.iter().map(|&k| ["fc", "an"][k as usize])).unwrap();
    }
    if let Some(s) = steps {
        p = p.with_values("step", s.iter().map(u8::to_string)).unwrap();
    }
    if let Some(w) = writers {
        p = p.with_values("number", w.iter().map(usize::to_string)).unwrap();
    }
    p
}

/// Result of one read operation of a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    Retrieve(Vec<u8>),
    List(Vec<(Identifier, Vec<u8>)>),
}

/// A read together with whether every writer had flushed all its archives
/// when it happened. At such points both visibility rules agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Read {
    pub step: usize,
    pub quiescent: bool,
    pub observed: Observation,
}

#[derive(Default)]
struct Oracle {
    archived: BTreeMap<Identifier, Vec<u8>>,
    flushed: BTreeMap<Identifier, Vec<u8>>,
    pending: Vec<Vec<(Identifier, Vec<u8>)>>,
}

impl Oracle {
    fn new() -> Oracle {
        Oracle { pending: vec![Vec::new(); WRITERS], ..Default::default() }
    }

    fn visible(&self, kind: BackendKind) -> &BTreeMap<Identifier, Vec<u8>> {
        match kind {
            BackendKind::Fs => &self.flushed,
            BackendKind::Obj => &self.archived,
        }
    }

    fn flush(&mut self, writer: usize) {
        for (id, data) in self.pending[writer].drain(..) {
            self.flushed.insert(id, data);
        }
    }

    fn quiescent(&self) -> bool {
        self.pending.iter().all(Vec::is_empty)
    }
}

fn observe_list(session: &mut Session, partial: &PartialIdentifier) -> Result<Vec<(Identifier, Vec<u8>)>, String> {
    let entries = session.list(partial).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for e in entries {
        let bytes = session.retrieve(std::slice::from_ref(&e.identifier)).and_then(|h| h.read()).map_err(|e| e.to_string())?;
        out.push((e.identifier, bytes));
    }
    Ok(out)
}

/// Replays `ops` on `store`, checking every read against the oracle of the
/// store's backend. Reads use a fresh session so that they see the state at
/// that point of the trace. All writers are closed at the end and a final
/// match-all list is recorded.
pub fn replay(store: &FieldStore, ops: &[Op]) -> Result<Vec<Read>, String> {
    let kind = store.kind();
    let mut oracle = Oracle::new();
    let mut writers: Vec<Option<Session>> = (0..WRITERS).map(|_| None).collect();
    let mut reads = Vec::new();
    let fail = |step: usize, what: String| format!("step {step} ({kind:?}): {what}");
    let all_dates = [1u8, 2];

    for (step, op) in ops.iter().enumerate() {
        match op {
            Op::Archive { writer, field, payload } => {
                let id = field.identifier(*writer);
                let s = writers[*writer].get_or_insert_with(|| store.session());
                s.archive(&id, payload).map_err(|e| fail(step, e.to_string()))?;
                oracle.archived.insert(id.clone(), payload.clone());
                oracle.pending[*writer].push((id, payload.clone()));
            }
            Op::Flush { writer } => {
                if let Some(s) = writers[*writer].as_mut() {
                    s.flush().map_err(|e| fail(step, e.to_string()))?;
                }
                oracle.flush(*writer);
            }
            Op::Close { writer } => {
                if let Some(mut s) = writers[*writer].take() {
                    s.close().map_err(|e| fail(step, e.to_string()))?;
                }
                oracle.flush(*writer);
            }
            Op::Retrieve { query } => {
                let ids: Vec<Identifier> = query.iter().map(|(w, f)| f.identifier(*w)).collect();
                let mut reader = store.session();
                let got = reader.retrieve(&ids).and_then(|h| h.read()).map_err(|e| fail(step, e.to_string()))?;
                let expected: Vec<u8> =
                    ids.iter().filter_map(|id| oracle.visible(kind).get(id)).flatten().copied().collect();
                if got != expected {
                    return Err(fail(step, format!("retrieve of {} ids: {} bytes, oracle {} bytes", ids.len(), got.len(), expected.len())));
                }
                reads.push(Read { step, quiescent: oracle.quiescent(), observed: Observation::Retrieve(got) });
            }
            Op::List { date, kinds, steps, writers: ws } => {
                let partial = list_partial(*date, kinds, steps, ws);
                let mut reader = store.session();
                let got = observe_list(&mut reader, &partial).map_err(|e| fail(step, e))?;
                let expected: Vec<(Identifier, Vec<u8>)> = oracle
                    .visible(kind)
                    .iter()
                    .filter(|(id, _)| partial.matches(id))
                    .map(|(id, d)| (id.clone(), d.clone()))
                    .collect();
                if got != expected {
                    return Err(fail(step, format!("list {partial}: {} entries, oracle {}", got.len(), expected.len())));
                }
                reads.push(Read { step, quiescent: oracle.quiescent(), observed: Observation::List(got) });
            }
        }
    }

    for (w, s) in writers.iter_mut().enumerate() {
        if let Some(s) = s.as_mut() {
            s.close().map_err(|e| fail(ops.len(), e.to_string()))?;
        }
        oracle.flush(w);
    }
    let mut everything = Vec::new();
    let mut reader = store.session();
    for date in all_dates {
        everything.extend(observe_list(&mut reader, &list_partial(date, &None, &None, &None)).map_err(|e| fail(ops.len(), e))?);
    }
    let expected: Vec<(Identifier, Vec<u8>)> = oracle.archived.iter().map(|(i, d)| (i.clone(), d.clone())).collect();
    let mut sorted = everything.clone();
    sorted.sort();
    if sorted != expected {
        return Err(fail(ops.len(), format!("final list: {} entries, oracle {}", sorted.len(), expected.len())));
    }
    reads.push(Read { step: ops.len(), quiescent: true, observed: Observation::List(everything) });
    Ok(reads)
}

/// Quiescent reads of two replays of one trace must agree.
pub fn compare_quiescent(a: &[Read], b: &[Read]) -> Result<usize, String> {
    let qa: Vec<&Read> = a.iter().filter(|r| r.quiescent).collect();
    let qb: Vec<&Read> = b.iter().filter(|r| r.quiescent).collect();
    if qa.len() != qb.len() {
        return Err(format!("{} quiescent reads against {}", qa.len(), qb.len()));
    }
    for (x, y) in qa.iter().zip(&qb) {
        if x != y {
            return Err(format!("reads at step {} differ", x.step));
        }
    }
    Ok(qa.len())
}

/// Runs the archive and flush operations of `ops` (closes become flushes),
/// then checks that the match-all listing is the same before and after every
/// writer closes.
pub fn masking_snapshots(store: &FieldStore, ops: &[Op]) -> Result<(Vec<Identifier>, Vec<Identifier>), String> {
    let mut writers: Vec<Session> = (0..WRITERS).map(|_| store.session()).collect();
    for op in ops {
        let r = match op {
            Op::Archive { writer, field, payload } => writers[*writer].archive(&field.identifier(*writer), payload),
            Op::Flush { writer } | Op::Close { writer } => writers[*writer].flush(),
            _ => Ok(()),
        };
        r.map_err(|e| e.to_string())?;
    }
    for w in &mut writers {
        w.flush().map_err(|e| e.to_string())?;
    }
    let snapshot = |store: &FieldStore| -> Result<Vec<(Identifier, Vec<u8>)>, String> {
        let mut reader = store.session();
        let mut all = Vec::new();
        for date in [1u8, 2] {
            all.extend(observe_list(&mut reader, &list_partial(date, &None, &None, &None))?);
        }
        Ok(all)
    };
    let before = snapshot(store)?;
    for w in &mut writers {
        w.close().map_err(|e| e.to_string())?;
    }
    let after = snapshot(store)?;
    if before != after {
        return Err(format!("{} entries before close, {} after, or differing bytes", before.len(), after.len()));
    }
    let ids = |v: Vec<(Identifier, Vec<u8>)>| v.into_iter().map(|(i, _)| i).collect::<Vec<_>>();
    Ok((ids(before), ids(after)))
}

/// Number of distinct identifiers a trace archives.
pub fn distinct_fields(ops: &[Op]) -> usize {
    ops.iter()
        .filter_map(|op| match op {
            Op::Archive { writer, field, .. } => Some((*writer, field.clone())),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .len()
}
