use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("center frequency {f_center} Hz aliases at fs = {fs} Hz (must be below {nyquist} Hz)")]
    Aliasing { f_center: f64, fs: f64, nyquist: f64 },

    #[error("degenerate kernel: truncation left {len} sample(s)")]
    DegenerateKernel { len: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("bank hash mismatch: spikes were encoded with {expected:016x}, bank is {found:016x}")]
    Compat { expected: u64, found: u64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("out-of-order spike at sample {got} (window already at {last})")]
    Sequencing { last: u64, got: u64 },

    #[error("{what} = {size} exceeds the limit of {limit}; {hint}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
        hint: &'static str,
    },

    #[error("SNR undefined for an all-zero reference")]
    UndefinedSnr,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code: 1 usage, 2 format or I/O, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::TooLarge { .. } => 1,
            Error::Format(_)
            | Error::UnsupportedFormat(_)
            | Error::Compat { .. }
            | Error::Io { .. } => 2,
            Error::Aliasing { .. }
            | Error::DegenerateKernel { .. }
            | Error::Input(_)
            | Error::Domain(_)
            | Error::Sequencing { .. }
            | Error::UndefinedSnr => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
