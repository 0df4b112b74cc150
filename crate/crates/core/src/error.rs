use std::path::PathBuf;

/// Errors produced by the library.
///
/// Data errors always name the offending file, key or parameter so the CLI
/// can report them without further context.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed {what}: {reason}")]
    Format {
        path: PathBuf,
        what: &'static str,
        reason: String,
    },

    #[error("no dark frames for sensor `{sensor_id}` at ISO {iso}")]
    MissingDarkFrames { sensor_id: String, iso: u32 },

    #[error("duplicate record id `{0}`")]
    DuplicateRecord(String),

    #[error("profile has no entry for {0}")]
    MissingProfileEntry(String),

    #[error("patch {h}x{w} does not fit in a {height}x{width} frame")]
    PatchTooLarge {
        h: usize,
        w: usize,
        height: usize,
        width: usize,
    },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("no distribution family converged: {0}")]
    FitFailed(String),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
