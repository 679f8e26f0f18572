use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed manifest {}: {reason}", path.display())]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("geometry mismatch in {field}: declared {declared}, found {found}")]
    GeometryMismatch {
        field: &'static str,
        declared: String,
        found: String,
    },

    #[error("i/o error reading frame {frame}: {source}")]
    FrameIo {
        frame: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to spawn detector `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("detector protocol violation at byte {offset}: {reason}")]
    Protocol { offset: usize, reason: String },

    #[error("detector reported error for request {id}: {message}")]
    Remote { id: String, message: String },

    #[error("detector timed out after {0:.1} s")]
    Timeout(f64),

    #[error("ledger from segment {ledger} cannot precede segment {segment}")]
    LedgerAdjacency { ledger: usize, segment: usize },

    #[error("infeasible scene: {0}")]
    Infeasible(String),

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("{system}: {source}")]
    System {
        system: String,
        #[source]
        source: Box<Error>,
    },

    #[error("segment {segment}: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_segment(self, segment: usize) -> Self {
        Error::Segment {
            segment,
            source: Box::new(self),
        }
    }
}
