//! Contention benchmark for the field store.
//!
//! Writer sessions archive a grid of synthetic weather fields (members,
//! steps, parameters, levels), reader sessions retrieve and verify them, and
//! a list session enumerates one step. Sessions run as threads or as worker
//! processes; each phase is reported as total bytes over the time from the
//! first session start to the last session end.

pub mod bandwidth;
pub mod clock;
pub mod config;
pub mod grid;
pub mod job;
pub mod report;
pub mod runner;

/// Monotonic timestamps and durations.
pub type Nanos = u64;
/// Bandwidth in bytes per second, as reported.
pub type Rate = f64;
/// Bandwidth in bytes per second, exact.
pub type ExactRate = num_rational::BigRational;

pub use bandwidth::{compute_bandwidth, Event, Scalar, Summary};
pub use config::{HammerConfig, Mode, Pattern};
pub use grid::{check_payload, gen_identifier, payload, template, Verdict};
pub use job::{run_job, Job, JobSettings, Role, SessionResult, Slice};
pub use report::{summarize, write_csv, PhaseReport, PhaseSummary};
pub use runner::{worker_main, Runner, WorkerSpec};
