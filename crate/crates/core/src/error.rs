use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("unsupported face at {location}: {vertices} vertices (only triangles are supported)")]
    UnsupportedFace { location: String, vertices: usize },

    #[error("alignment error: expected {expected} records, found {found}")]
    Alignment { expected: usize, found: usize },

    #[error("scene does not fit the voxel grid along {axis}: needs {needed} voxels, extent is {extent}")]
    OutOfExtent { axis: char, needed: u64, extent: u32 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format_at_line(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            location: format!("line {line}"),
            message: message.into(),
        }
    }
}
