use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("instance too large: {nodes} APs share channel {channel} (limit {limit})")]
    InstanceTooLarge {
        channel: usize,
        nodes: usize,
        limit: usize,
    },

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidInput(_) => "invalid_input",
            Error::EigenNoConvergence { .. } => "eigen_no_convergence",
            Error::InstanceTooLarge { .. } => "instance_too_large",
            Error::ArchitectureMismatch(_) => "architecture_mismatch",
            Error::MalformedCheckpoint(_) => "malformed_checkpoint",
            Error::Divergence { .. } => "divergence",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}
