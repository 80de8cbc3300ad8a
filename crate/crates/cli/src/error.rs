use std::path::{Path, PathBuf};

use thiserror::Error;

/// Everything a command can fail with. [`Error::exit_code`] maps input or
/// argument problems to 1 and filesystem failures to 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Invalid(String),
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Invalid(_) | Error::Parse { .. } => 1,
            Error::Io { .. } => 2,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: usize, msg: impl ToString) -> Self {
        Error::Parse { path: path.to_path_buf(), line, msg: msg.to_string() }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {
        $(impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Invalid(e.to_string())
            }
        })*
    };
}

invalid_from!(
    scenesketch_core::sketch::SketchError,
    scenesketch_core::geometry::GeometryError,
    scenesketch_core::encoder::EncoderError,
    scenesketch_core::hdecoder::DecoderError,
    scenesketch_core::retrieval::RetrievalError,
    scenesketch_core::analysis::AnalysisError,
    scenesketch_core::synth::SynthError,
    scenesketch_core::TensorError
);

pub type Result<T> = std::result::Result<T, Error>;
