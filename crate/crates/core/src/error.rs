use std::path::PathBuf;

/// Recoverable failures surfaced to callers. Programmer errors (dimension
/// mismatches between library types, empty candidate sets) panic instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A frame could not be read or decoded; names the offending file.
    #[error("ingest failed for {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    /// Input geometry is unusable (frame smaller than one block, mixed
    /// frame sizes, estimate/truth size mismatch, bad raw-file length).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Not enough frames for the requested operation.
    #[error("insufficient frames: {0}")]
    InsufficientFrames(String),

    /// Invalid configuration value or unparseable config/spec file.
    #[error("configuration error: {0}")]
    Config(String),

    /// Snapshot file is malformed or has an unsupported version.
    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
