use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Mode {
    Write,
    Read,
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Pattern {
    /// Write phase to completion, then read phase.
    #[value(name = "none")]
    NoContention,
    /// Readers verify a populated store while fresh writers add new steps.
    #[value(name = "wr")]
    WrContention,
    /// Writers keep re-archiving their fields while readers keep retrieving them.
    #[value(name = "repeated")]
    Repeated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HammerConfig {
    pub nparams: u32,
    pub nlevels: u32,
    pub nsteps: u32,
    /// Writer nodes; each writes one ensemble member.
    pub nensembles: u32,
    /// Sessions per node; each covers its own `nlevels` levels.
    pub sessions: u32,
    pub field_size: usize,
    /// Runs a contention pattern instead of the single phase of `mode`.
    pub pattern: Option<Pattern>,
    pub mode: Mode,
    pub verify: bool,
    pub repetitions: u32,
    /// Passes over the grid made by each session in the repeated pattern.
    pub iterations: u32,
}

impl Default for HammerConfig {
    fn default() -> Self {
        HammerConfig {
            nparams: 4,
            nlevels: 4,
            nsteps: 5,
            nensembles: 2,
            sessions: 1,
            field_size: 1 << 20,
            pattern: None,
            mode: Mode::Write,
            verify: false,
            repetitions: 3,
            iterations: 3,
        }
    }
}

impl HammerConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, v) in [
            ("nparams", self.nparams),
            ("nlevels", self.nlevels),
            ("nsteps", self.nsteps),
            ("nensembles", self.nensembles),
            ("sessions", self.sessions),
            ("reps", self.repetitions),
            ("iterations", self.iterations),
        ] {
            anyhow::ensure!(v >= 1, "--{name} must be at least 1");
        }
        anyhow::ensure!(self.field_size >= 1, "--field-size must be at least 1 byte");
        if self.pattern == Some(Pattern::Repeated) {
            anyhow::ensure!(self.field_size >= 8, "the repeated pattern needs fields of at least 8 bytes to carry versions");
        }
        Ok(())
    }

    /// Writer sessions over all nodes.
    pub fn writers(&self) -> u32 {
        self.nensembles * self.sessions
    }

    /// Fields archived by one session in one pass.
    pub fn fields_per_session(&self) -> u64 {
        u64::from(self.nsteps) * u64::from(self.nparams) * u64::from(self.nlevels)
    }

    /// Entries the list phase must find for one step.
    pub fn fields_per_step(&self) -> u64 {
        u64::from(self.writers()) * u64::from(self.nparams) * u64::from(self.nlevels)
    }
}
