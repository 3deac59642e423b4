use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("negative power sample {0} W")]
    NegativeSample(f64),

    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("probability {0} outside [0, 1)")]
    InvalidProbability(f64),

    #[error("random draw {0} outside [1, 100]")]
    InvalidDraw(u32),

    #[error("demand must be positive, got {0} W")]
    NonPositiveDemand(f64),

    #[error("empty home set")]
    EmptyHomeSet,

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("relay list for device {device} has {len} entries, expected 5")]
    RelayCount { device: usize, len: usize },

    #[error("device id {id} not in frame of {devices} devices")]
    DeviceOutOfRange { id: usize, devices: usize },

    #[error("invalid corpus: {0}")]
    Corpus(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("nothing to report")]
    EmptyReport,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
