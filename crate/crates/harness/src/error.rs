use std::path::Path;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] hybridae::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("not a model file (bad magic bytes)")]
    BadMagic,

    #[error("model file format version {found} does not match supported version {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model file checksum mismatch (file is corrupt or truncated)")]
    Checksum,

    #[error("model payload could not be decoded: {0}")]
    Decode(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
