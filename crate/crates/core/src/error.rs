use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// A configuration or parameter invariant does not hold.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("scale factor {0} must be a finite number > 0")]
    ScaleOutOfRange(String),

    #[error("connection probability {0} outside [0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("cannot draw {count} synapses from an empty population")]
    EmptyPopulation { count: u64 },

    #[error("population {population}: requested {requested} neurons but only {available} exist")]
    SampleTooLarge {
        population: String,
        requested: usize,
        available: usize,
    },

    #[error("propagator undefined: tau_m == tau_syn ({0} ms)")]
    DegenerateTimeConstants(f64),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
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
