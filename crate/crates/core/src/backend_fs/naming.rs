use std::fs::{File, OpenOptions};
use std::io::ErrorKind;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::Result;

/// Wall-clock source for unique file names, in nanoseconds.
pub type Clock = Arc<dyn Fn() -> u128 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0))
}

pub(crate) fn host_name() -> &'static str {
    static HOST: OnceLock<String> = OnceLock::new();
    HOST.get_or_init(|| {
        let raw = std::fs::read_to_string("/proc/sys/kernel/hostname")
            .or_else(|_| std::env::var("HOSTNAME"))
            .unwrap_or_else(|_| "localhost".into());
        let clean: String =
            raw.trim().chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        if clean.is_empty() { "localhost".into() } else { clean }
    })
}

/// Generates per-session file names from the wall-clock time, host name,
/// process id, session id and a counter. The counter alone keeps names of one
/// session distinct when the clock does not move; creation uses `O_EXCL` and
/// retries on the off chance that a name is taken anyway.
pub(crate) struct Namer {
    clock: Clock,
    session: u64,
    counter: u64,
}

impl Namer {
    pub(crate) fn new(clock: Clock, session: u64) -> Namer {
        Namer { clock, session, counter: 0 }
    }

    fn next(&mut self, stem: &str, ext: &str) -> String {
        self.counter += 1;
        format!(
            "{stem}.{:x}.{}.{}.{}.{}.{ext}",
            (self.clock)(),
            host_name(),
            std::process::id(),
            self.session,
            self.counter
        )
    }

    /// Creates a new file in `dir`, append-only, and returns its name.
    pub(crate) fn create(&mut self, dir: &Path, stem: &str, ext: &str) -> Result<(String, File)> {
        loop {
            let name = self.next(stem, ext);
            match OpenOptions::new().append(true).read(true).create_new(true).open(dir.join(&name)) {
                Ok(f) => return Ok((name, f)),
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}
