//! Global timing bandwidth and repetition statistics.
//!
//! Every function is generic over [`Scalar`] so the same arithmetic runs in
//! `f64` for reports and in exact rationals for checking them.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};

use crate::Nanos;

const NANOS_PER_SECOND: u64 = 1_000_000_000;

pub trait Scalar: Num + Clone + PartialOrd + Debug {
    fn from_u64(v: u64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn from_u64(v: u64) -> f64 {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn from_u64(v: u64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// I/O of one session: first operation start, last operation end, bytes moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub start: Nanos,
    pub end: Nanos,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BandwidthError {
    #[error("no sessions to measure")]
    NoEvents,
    #[error("session ends at {end} before it starts at {start}")]
    Reversed { start: Nanos, end: Nanos },
    #[error("phase took no measurable time")]
    ZeroElapsed,
}

/// Time from the first start to the last end over all events.
pub fn envelope(events: &[Event]) -> Result<Nanos, BandwidthError> {
    if let Some(e) = events.iter().find(|e| e.end < e.start) {
        return Err(BandwidthError::Reversed { start: e.start, end: e.end });
    }
    let start = events.iter().map(|e| e.start).min().ok_or(BandwidthError::NoEvents)?;
    let end = events.iter().map(|e| e.end).max().ok_or(BandwidthError::NoEvents)?;
    match end - start {
        0 => Err(BandwidthError::ZeroElapsed),
        span => Ok(span),
    }
}

/// Total bytes over the envelope, in bytes per second.
pub fn compute_bandwidth<S: Scalar>(events: &[Event]) -> Result<S, BandwidthError> {
    let span = envelope(events)?;
    let bytes: u64 = events.iter().map(|e| e.bytes).sum();
    Ok(S::from_u64(bytes) * S::from_u64(NANOS_PER_SECOND) / S::from_u64(span))
}

/// Spread of session start times.
pub fn start_skew(events: &[Event]) -> Nanos {
    let first = events.iter().map(|e| e.start).min().unwrap_or(0);
    let last = events.iter().map(|e| e.start).max().unwrap_or(0);
    last - first
}

/// Whether starts are spread over more than a tenth of the phase.
pub fn is_skewed(events: &[Event]) -> bool {
    match envelope(events) {
        Ok(span) => u128::from(start_skew(events)) * 10 > u128::from(span),
        Err(_) => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary<S> {
    pub count: usize,
    pub mean: S,
    /// Sample variance (n - 1 denominator); zero for a single value.
    pub variance: S,
}

impl<S: Scalar> Summary<S> {
    pub fn of(values: &[S]) -> Option<Summary<S>> {
        if values.is_empty() {
            return None;
        }
        let n = S::from_u64(values.len() as u64);
        let mean = values.iter().cloned().fold(S::zero(), |a, b| a + b) / n;
        let variance = if values.len() < 2 {
            S::zero()
        } else {
            let squares = values.iter().fold(S::zero(), |acc, v| {
                let d = v.clone() - mean.clone();
                acc + d.clone() * d
            });
            squares / S::from_u64(values.len() as u64 - 1)
        };
        Some(Summary { count: values.len(), mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.to_f64().sqrt()
    }
}
