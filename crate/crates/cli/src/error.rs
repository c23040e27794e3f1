use std::fmt;
use std::io;
use std::path::PathBuf;

/// Pipeline stage an error surfaced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Config,
    World,
    Sample,
    Evaluate,
    Fit,
    Diagnostics,
    Select,
    Final,
    Persist,
    Report,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Config => "config",
            Phase::World => "world",
            Phase::Sample => "sample",
            Phase::Evaluate => "evaluate",
            Phase::Fit => "fit",
            Phase::Diagnostics => "diagnostics",
            Phase::Select => "select",
            Phase::Final => "final",
            Phase::Persist => "persist",
            Phase::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("[{phase}] {source}")]
    Core { phase: Phase, source: tasksel_core::Error },
    #[error("oracle protocol: {0}")]
    Protocol(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Format(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 invalid config, 3 singular fit, 4 oracle protocol, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } => core_code(source),
            CliError::Protocol(_) => 4,
            CliError::Io { .. } | CliError::Format(_) => 5,
        }
    }
}

fn core_code(e: &tasksel_core::Error) -> i32 {
    use tasksel_core::Error::*;
    match e {
        SingularDesign { .. } | SingularMatrix(_) => 3,
        Evaluation { .. } => 4,
        AtGamma { source, .. } => core_code(source),
        InvalidParameter(_) | UndefinedCorrelation(_) | EnumerationGuard { .. } => 2,
    }
}

/// Attaches a phase tag to core results.
pub trait AtPhase<T> {
    fn at(self, phase: Phase) -> CliResult<T>;
}

impl<T> AtPhase<T> for tasksel_core::Result<T> {
    fn at(self, phase: Phase) -> CliResult<T> {
        self.map_err(|source| CliError::Core { phase, source })
    }
}
