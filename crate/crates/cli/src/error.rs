use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration, or input files. Exit 2.
    Usage(String),
    /// Training produced a non-finite update. Exit 3.
    Diverged(String),
    /// Reading or writing outputs failed. Exit 4.
    Io(String),
    /// Anything else that stopped the run. Exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Diverged(m) => write!(f, "training diverged: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<mars_core::Error> for CliError {
    fn from(e: mars_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    mars_core::agent::AgentError,
    mars_core::decision::DecisionError,
    mars_core::simulator::SimError,
    mars_core::metrics::MetricsError,
    mars_core::neural::NeuralError,
    mars_core::dag::DagError
);

impl From<mars_core::workload::WorkloadError> for CliError {
    fn from(e: mars_core::workload::WorkloadError) -> Self {
        CliError::Usage(e.to_string())
    }
}
