//! Coordinator: turns a configuration into phases of concurrent sessions.

use std::io::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use anyhow::{bail, Context};
use fieldstore::{BackendKind, Config, EngineAccess, FieldStore};
use fieldstore_engine::{EngineOpCounters, EngineServer};
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::clock;
use crate::config::{HammerConfig, Mode, Pattern};
use crate::job::{run_job, Job, JobSettings, Role, SessionResult, Slice};
use crate::report::PhaseReport;
use crate::Nanos;

/// Delay between launching sessions and their common start time.
const THREAD_LEAD: Nanos = 20_000_000;
const PROCESS_LEAD: Nanos = 250_000_000;

enum Launch {
    Threads,
    Processes { exe: PathBuf, config: PathBuf },
}

/// Everything a worker process needs to run one session.
#[derive(Debug, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub config: PathBuf,
    pub job: Job,
    pub settings: JobSettings,
    pub start_at: Nanos,
}

/// Entry point of `hammer --worker`: runs one session and returns its result as JSON.
pub fn worker_main(spec: &str) -> anyhow::Result<String> {
    let spec: WorkerSpec = serde_json::from_str(spec).context("bad worker spec")?;
    let store = FieldStore::open_path(&spec.config).with_context(|| format!("opening {}", spec.config.display()))?;
    let result = run_job(&store, &spec.job, spec.settings, spec.start_at)?;
    Ok(serde_json::to_string(&result)?)
}

pub struct Runner {
    cfg: HammerConfig,
    store: FieldStore,
    launch: Launch,
    _server: Option<EngineServer>,
    _worker_config: Option<tempfile::NamedTempFile>,
}

impl Runner {
    /// Runs every session as a thread of this process.
    pub fn in_threads(cfg: HammerConfig, store: FieldStore) -> anyhow::Result<Runner> {
        cfg.validate()?;
        Ok(Runner { cfg, store, launch: Launch::Threads, _server: None, _worker_config: None })
    }

    /// Opens the store described by `config`. With `worker_exe`, sessions run
    /// as processes of that executable; a locally opened engine is then
    /// served to them over its socket.
    pub fn open(cfg: HammerConfig, config: &Path, worker_exe: Option<PathBuf>) -> anyhow::Result<Runner> {
        cfg.validate()?;
        let config = std::path::absolute(config)?;
        let parsed = Config::load(&config).with_context(|| format!("reading {}", config.display()))?;
        let store = FieldStore::open(&parsed).with_context(|| format!("opening store of {}", config.display()))?;
        let Some(exe) = worker_exe else {
            return Ok(Runner { cfg, store, launch: Launch::Threads, _server: None, _worker_config: None });
        };
        let mut server = None;
        let mut worker_config = None;
        let shared_config = match (parsed.backend, parsed.engine) {
            (BackendKind::Fs, _) | (BackendKind::Obj, EngineAccess::Socket) => config,
            (BackendKind::Obj, EngineAccess::Memory) => {
                bail!("an in-memory engine cannot be shared with worker processes; use --threads")
            }
            (BackendKind::Obj, EngineAccess::Local) => {
                let engine = store.engine().expect("object store has an engine");
                let socket = fieldstore::socket_path(&parsed.root);
                server = Some(EngineServer::spawn(engine, &socket)?);
                let mut tmp = tempfile::Builder::new().prefix("hammer-").suffix(".cfg").tempfile()?;
                tmp.write_all(Config { engine: EngineAccess::Socket, ..parsed }.to_text().as_bytes())?;
                tmp.flush()?;
                info!(socket = %socket.display(), "serving engine to workers");
                let path = tmp.path().to_owned();
                worker_config = Some(tmp);
                path
            }
        };
        Ok(Runner {
            cfg,
            store,
            launch: Launch::Processes { exe, config: shared_config },
            _server: server,
            _worker_config: worker_config,
        })
    }

    pub fn store(&self) -> &FieldStore {
        &self.store
    }

    pub fn config(&self) -> &HammerConfig {
        &self.cfg
    }

    /// Runs all repetitions.
    pub fn run(&self) -> anyhow::Result<Vec<PhaseReport>> {
        let mut reports = Vec::new();
        for rep in 1..=self.cfg.repetitions {
            let phases = self.run_once(rep)?;
            for p in &phases {
                info!(
                    rep,
                    phase = %p.phase,
                    sessions = p.sessions.len(),
                    bytes = p.bytes,
                    seconds = p.seconds(),
                    bandwidth = p.bandwidth,
                    failures = p.failures(),
                    "phase done"
                );
            }
            reports.extend(phases);
        }
        Ok(reports)
    }

    fn run_once(&self, rep: u32) -> anyhow::Result<Vec<PhaseReport>> {
        let n = self.cfg.nsteps;
        let first = 1..=n;
        let Some(pattern) = self.cfg.pattern else {
            return Ok(vec![match self.cfg.mode {
                Mode::Write => self.phase(rep, "write", self.writers(first, 0..=0))?,
                Mode::Read => self.phase(rep, "read", self.readers(first, 1, 0, true))?,
                Mode::List => self.phase(rep, "list", vec![Job::List { step: 1, expected: self.cfg.fields_per_step() }])?,
            }]);
        };
        match pattern {
            Pattern::NoContention => Ok(vec![
                self.phase(rep, "write", self.writers(first.clone(), 0..=0))?,
                self.phase(rep, "read", self.readers(first, 1, 0, true))?,
            ]),
            Pattern::WrContention => {
                let prelim = self.phase(rep, "prelim", self.writers(first.clone(), 0..=0))?;
                let mut jobs = self.writers(n + 1..=2 * n, 0..=0);
                jobs.extend(self.readers(first, 1, 0, true));
                let mut out = vec![prelim];
                out.extend(self.contended(rep, jobs)?);
                Ok(out)
            }
            Pattern::Repeated => {
                let k = self.cfg.iterations;
                let prelim = self.phase(rep, "prelim", self.writers(first.clone(), 0..=0))?;
                let mut jobs = self.writers(first.clone(), 1..=u64::from(k));
                jobs.extend(self.readers(first, k, u64::from(k), false));
                let mut out = vec![prelim];
                out.extend(self.contended(rep, jobs)?);
                Ok(out)
            }
        }
    }

    fn slice(&self, session: u32, steps: RangeInclusive<u32>) -> Slice {
        let slot = session % self.cfg.sessions;
        let nl = self.cfg.nlevels;
        Slice {
            member: session / self.cfg.sessions + 1,
            steps,
            params: 1..=self.cfg.nparams,
            levels: slot * nl + 1..=(slot + 1) * nl,
        }
    }

    pub fn writers(&self, steps: RangeInclusive<u32>, versions: RangeInclusive<u64>) -> Vec<Job> {
        (0..self.cfg.writers())
            .map(|i| Job::Write { index: i, slice: self.slice(i, steps.clone()), versions: versions.clone() })
            .collect()
    }

    pub fn readers(&self, steps: RangeInclusive<u32>, passes: u32, max_version: u64, exact: bool) -> Vec<Job> {
        (0..self.cfg.writers())
            .map(|i| Job::Read { index: i, slice: self.slice(i, steps.clone()), passes, max_version, exact })
            .collect()
    }

    fn phase(&self, rep: u32, name: &str, jobs: Vec<Job>) -> anyhow::Result<PhaseReport> {
        let (results, counters) = self.run_jobs(&jobs)?;
        let sessions = results.into_iter().map(|(_, r)| r).collect();
        PhaseReport::new(rep, name, sessions, counters).with_context(|| format!("phase {name}"))
    }

    /// Writers and readers started together, reported as separate phases.
    fn contended(&self, rep: u32, jobs: Vec<Job>) -> anyhow::Result<Vec<PhaseReport>> {
        let (results, counters) = self.run_jobs(&jobs)?;
        let mut out = Vec::new();
        for (role, name) in [(Role::Writer, "write"), (Role::Reader, "read")] {
            let sessions: Vec<SessionResult> = results.iter().filter(|(r, _)| *r == role).map(|(_, s)| s.clone()).collect();
            out.push(PhaseReport::new(rep, name, sessions, counters.clone()).with_context(|| format!("phase {name}"))?);
        }
        Ok(out)
    }

    fn counters(&self) -> anyhow::Result<EngineOpCounters> {
        Ok(match self.store.engine() {
            Some(e) => e.counters_snapshot()?,
            None => EngineOpCounters::default(),
        })
    }

    pub fn run_jobs(&self, jobs: &[Job]) -> anyhow::Result<(Vec<(Role, SessionResult)>, EngineOpCounters)> {
        let settings = JobSettings { field_size: self.cfg.field_size, verify: self.cfg.verify };
        let before = self.counters()?;
        let results = match &self.launch {
            Launch::Threads => {
                let start_at = clock::now() + THREAD_LEAD;
                std::thread::scope(|scope| {
                    let handles: Vec<_> =
                        jobs.iter().map(|job| scope.spawn(move || run_job(&self.store, job, settings, start_at))).collect();
                    handles.into_iter().map(|h| h.join().expect("session thread panicked")).collect::<Vec<_>>()
                })
            }
            Launch::Processes { exe, config } => {
                let start_at = clock::now() + PROCESS_LEAD;
                let mut children = Vec::new();
                for job in jobs {
                    let spec = WorkerSpec { config: config.clone(), job: job.clone(), settings, start_at };
                    let child = Command::new(exe)
                        .arg("--worker")
                        .arg(serde_json::to_string(&spec)?)
                        .stdin(Stdio::null())
                        .stdout(Stdio::piped())
                        .stderr(Stdio::inherit())
                        .spawn()
                        .with_context(|| format!("spawning {}", exe.display()))?;
                    children.push(child);
                }
                debug!(workers = children.len(), "workers launched");
                children
                    .into_iter()
                    .enumerate()
                    .map(|(i, child)| {
                        let out = child.wait_with_output()?;
                        if !out.status.success() {
                            bail!("worker {i} failed with {}", out.status);
                        }
                        serde_json::from_slice(&out.stdout).with_context(|| format!("worker {i} output"))
                    })
                    .collect()
            }
        };
        let counters = self.counters()?.since(&before);
        let results = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
        Ok((jobs.iter().map(Job::role).zip(results).collect(), counters))
    }
}
