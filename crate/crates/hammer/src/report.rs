use std::collections::BTreeMap;
use std::io::Write;

use fieldstore_engine::EngineOpCounters;

use crate::bandwidth::{compute_bandwidth, is_skewed, start_skew, BandwidthError, Event, Summary};
use crate::job::SessionResult;
use crate::{ExactRate, Nanos, Rate};

/// Timings and totals of one phase of one repetition.
#[derive(Debug, Clone)]
pub struct PhaseReport {
    pub repetition: u32,
    pub phase: String,
    pub sessions: Vec<SessionResult>,
    pub bytes: u64,
    pub ops: u64,
    pub span: Nanos,
    pub bandwidth: Rate,
    pub exact_bandwidth: ExactRate,
    pub start_skew: Nanos,
    pub skewed: bool,
    pub missing: u64,
    pub mismatched: u64,
    pub torn: u64,
    pub listed: u64,
    /// Engine operations issued during the phase (object backend only).
    pub counters: EngineOpCounters,
}

impl PhaseReport {
    pub fn new(
        repetition: u32,
        phase: &str,
        sessions: Vec<SessionResult>,
        counters: EngineOpCounters,
    ) -> Result<PhaseReport, BandwidthError> {
        let events: Vec<Event> = sessions.iter().map(|s| Event { start: s.start, end: s.end, bytes: s.bytes }).collect();
        let exact_bandwidth = compute_bandwidth::<ExactRate>(&events)?;
        let sum = |f: fn(&SessionResult) -> u64| sessions.iter().map(f).sum::<u64>();
        Ok(PhaseReport {
            repetition,
            phase: phase.to_owned(),
            bytes: sum(|s| s.bytes),
            ops: sum(|s| s.ops),
            span: crate::bandwidth::envelope(&events)?,
            bandwidth: compute_bandwidth::<Rate>(&events)?,
            exact_bandwidth,
            start_skew: start_skew(&events),
            skewed: is_skewed(&events),
            missing: sum(|s| s.missing),
            mismatched: sum(|s| s.mismatched),
            torn: sum(|s| s.torn),
            listed: sum(|s| s.listed),
            counters,
            sessions,
        })
    }

    pub fn failures(&self) -> u64 {
        self.missing + self.mismatched + self.torn
    }

    pub fn first_failure(&self) -> Option<&str> {
        self.sessions.iter().find_map(|s| s.failure.as_deref())
    }

    pub fn seconds(&self) -> f64 {
        self.span as f64 / 1e9
    }

    /// First session start and last session end.
    pub fn window(&self) -> (Nanos, Nanos) {
        let start = self.sessions.iter().map(|s| s.start).min().unwrap_or(0);
        let end = self.sessions.iter().map(|s| s.end).max().unwrap_or(0);
        (start, end)
    }
}

/// Bandwidth mean and sample standard deviation of one phase over repetitions.
#[derive(Debug, Clone)]
pub struct PhaseSummary {
    pub phase: String,
    pub float: Summary<Rate>,
    pub exact: Summary<ExactRate>,
}

pub fn summarize(reports: &[PhaseReport]) -> Vec<PhaseSummary> {
    let mut by_phase: BTreeMap<&str, Vec<&PhaseReport>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in reports {
        let v = by_phase.entry(&r.phase).or_default();
        if v.is_empty() {
            order.push(r.phase.as_str());
        }
        v.push(r);
    }
    order
        .into_iter()
        .map(|phase| {
            let rs = &by_phase[phase];
            let float: Vec<Rate> = rs.iter().map(|r| r.bandwidth).collect();
            let exact: Vec<ExactRate> = rs.iter().map(|r| r.exact_bandwidth.clone()).collect();
            PhaseSummary {
                phase: phase.to_owned(),
                float: Summary::of(&float).expect("at least one report"),
                exact: Summary::of(&exact).expect("at least one report"),
            }
        })
        .collect()
}

pub const CSV_HEADER: [&str; 13] = [
    "repetition",
    "phase",
    "sessions",
    "bytes",
    "ops",
    "seconds",
    "bandwidth_bytes_per_s",
    "start_skew_s",
    "skewed",
    "missing",
    "mismatched",
    "torn",
    "listed",
];

/// One row per phase and repetition, then a `mean` and a `stddev` row per
/// phase. Engine operation counts follow the fixed columns.
pub fn write_csv<W: Write>(out: W, reports: &[PhaseReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = CSV_HEADER.iter().copied().chain(EngineOpCounters::COLUMNS).collect();
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.repetition.to_string(),
            r.phase.clone(),
            r.sessions.len().to_string(),
            r.bytes.to_string(),
            r.ops.to_string(),
            format!("{:.9}", r.seconds()),
            format!("{:.3}", r.bandwidth),
            format!("{:.9}", r.start_skew as f64 / 1e9),
            r.skewed.to_string(),
            r.missing.to_string(),
            r.mismatched.to_string(),
            r.torn.to_string(),
            r.listed.to_string(),
        ];
        row.extend(r.counters.as_row().iter().map(u64::to_string));
        w.write_record(&row)?;
    }
    for s in summarize(reports) {
        for (label, value) in [("mean", s.float.mean), ("stddev", s.float.std_dev())] {
            let mut row = vec![label.to_owned(), s.phase.clone(), String::new(), String::new(), String::new(), String::new()];
            row.push(format!("{value:.3}"));
            row.resize(header.len(), String::new());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
