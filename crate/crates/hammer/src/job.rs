//! Work of one session, runnable in a thread or in a worker process.

use std::ops::RangeInclusive;

use anyhow::Context;
use fieldstore::{FieldStore, Identifier};
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::clock;
use crate::grid::{check_payload, gen_identifier, payload, step_partial, template, Verdict};
use crate::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Writer,
    Reader,
    Lister,
}

/// The slice of the grid one session covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub member: u32,
    pub steps: RangeInclusive<u32>,
    pub params: RangeInclusive<u32>,
    pub levels: RangeInclusive<u32>,
}

impl Slice {
    pub fn identifiers(&self) -> impl Iterator<Item = Identifier> + '_ {
        let t = template();
        self.steps.clone().flat_map(move |step| self.step_identifiers(&t, step).collect::<Vec<_>>())
    }

    fn step_identifiers<'a>(&'a self, t: &'a Identifier, step: u32) -> impl Iterator<Item = Identifier> + 'a {
        self.params
            .clone()
            .flat_map(move |p| self.levels.clone().map(move |l| gen_identifier(t, self.member, step, p, l)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Job {
    /// Archive every field of the slice once per version, flushing after
    /// each step and closing at the end.
    Write { index: u32, slice: Slice, versions: RangeInclusive<u64> },
    /// Retrieve every field of the slice `passes` times, each pass in a new
    /// session. Versions up to `max_version` are accepted and must never
    /// go backwards; `exact` accepts `max_version` only.
    Read { index: u32, slice: Slice, passes: u32, max_version: u64, exact: bool },
    /// List one step and expect `expected` entries.
    List { step: u32, expected: u64 },
}

impl Job {
    pub fn role(&self) -> Role {
        match self {
            Job::Write { .. } => Role::Writer,
            Job::Read { .. } => Role::Reader,
            Job::List { .. } => Role::Lister,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSettings {
    pub field_size: usize,
    pub verify: bool,
}

/// What a session did, with its first-start and last-end timestamps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionResult {
    pub start: Nanos,
    pub end: Nanos,
    pub bytes: u64,
    pub ops: u64,
    pub flushes: u64,
    pub missing: u64,
    pub mismatched: u64,
    pub torn: u64,
    pub listed: u64,
    /// First verification failure, naming the identifier.
    pub failure: Option<String>,
}

impl SessionResult {
    fn fail(&mut self, msg: String) {
        warn!("{msg}");
        self.failure.get_or_insert(msg);
    }

    pub fn failures(&self) -> u64 {
        self.missing + self.mismatched + self.torn
    }
}

/// Runs `job` on `store`, starting no earlier than `start_at`.
pub fn run_job(store: &FieldStore, job: &Job, settings: JobSettings, start_at: Nanos) -> anyhow::Result<SessionResult> {
    clock::wait_until(start_at);
    match job {
        Job::Write { index, slice, versions } => write(store, *index, slice, versions.clone(), settings),
        Job::Read { index, slice, passes, max_version, exact } => {
            read(store, *index, slice, *passes, *max_version, *exact, settings)
        }
        Job::List { step, expected } => list(store, *step, *expected, settings),
    }
}

fn write(store: &FieldStore, index: u32, slice: &Slice, versions: RangeInclusive<u64>, settings: JobSettings) -> anyhow::Result<SessionResult> {
    let t = template();
    let mut r = SessionResult { start: clock::now(), ..Default::default() };
    let mut session = store.session();
    for version in versions {
        for step in slice.steps.clone() {
            for id in slice.step_identifiers(&t, step) {
                let data = payload(&id, version, settings.field_size);
                session.archive(&id, &data).with_context(|| format!("writer {index}: archive {id}"))?;
                r.bytes += data.len() as u64;
                r.ops += 1;
            }
            session.flush().with_context(|| format!("writer {index}: flush"))?;
            r.flushes += 1;
        }
    }
    session.close().with_context(|| format!("writer {index}: close"))?;
    r.end = clock::now();
    debug!(index, fields = r.ops, "writer done");
    Ok(r)
}

fn read(
    store: &FieldStore,
    index: u32,
    slice: &Slice,
    passes: u32,
    max_version: u64,
    exact: bool,
    settings: JobSettings,
) -> anyhow::Result<SessionResult> {
    let ids: Vec<Identifier> = slice.identifiers().collect();
    let mut seen = vec![0u64; ids.len()];
    let mut r = SessionResult { start: clock::now(), ..Default::default() };
    for _ in 0..passes {
        let mut session = store.session();
        for (i, id) in ids.iter().enumerate() {
            let handle = session.retrieve(std::slice::from_ref(id)).with_context(|| format!("reader {index}: retrieve {id}"))?;
            let bytes = handle.read().with_context(|| format!("reader {index}: read {id}"))?;
            r.ops += 1;
            r.bytes += bytes.len() as u64;
            if bytes.is_empty() {
                r.missing += 1;
                r.fail(format!("reader {index}: {id} is missing"));
                continue;
            }
            if !settings.verify {
                continue;
            }
            match check_payload(id, &bytes, settings.field_size) {
                Verdict::Torn => {
                    r.torn += 1;
                    r.fail(format!("reader {index}: {id} holds {} bytes that are not a version of it", bytes.len()));
                }
                Verdict::Intact(v) if v > max_version || (exact && v != max_version) || v < seen[i] => {
                    r.mismatched += 1;
                    r.fail(format!("reader {index}: {id} has version {v} after {}, accepted up to {max_version}", seen[i]));
                }
                Verdict::Intact(v) => seen[i] = v,
            }
        }
        session.close()?;
    }
    r.end = clock::now();
    debug!(index, fields = r.ops, failures = r.failures(), "reader done");
    Ok(r)
}

fn list(store: &FieldStore, step: u32, expected: u64, settings: JobSettings) -> anyhow::Result<SessionResult> {
    let partial = step_partial(&template(), step);
    let mut r = SessionResult { start: clock::now(), ..Default::default() };
    let mut session = store.session();
    let entries = session.list(&partial).with_context(|| format!("list {partial}"))?;
    r.end = clock::now();
    r.ops = 1;
    r.listed = entries.len() as u64;
    if settings.verify && r.listed != expected {
        r.mismatched += 1;
        r.fail(format!("list {partial} found {} entries, expected {expected}", r.listed));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_covers_its_grid() {
        let s = Slice { member: 2, steps: 1..=3, params: 1..=2, levels: 5..=8 };
        let ids: Vec<_> = s.identifiers().collect();
        assert_eq!(ids.len(), 24);
        assert!(ids.iter().all(|i| i.get("number") == Some("2")));
        let levels: std::collections::BTreeSet<_> = ids.iter().map(|i| i.get("levelist").unwrap().to_owned()).collect();
        assert_eq!(levels.len(), 4);
    }

    #[test]
    fn job_roundtrips_as_json() {
        let job = Job::Read {
            index: 3,
            slice: Slice { member: 1, steps: 1..=2, params: 1..=1, levels: 1..=1 },
            passes: 2,
            max_version: 4,
            exact: false,
        };
        let text = serde_json::to_string(&job).unwrap();
        assert_eq!(serde_json::from_str::<Job>(&text).unwrap(), job);
    }
}
