//! One error type for the IO-facing crate, wrapping the core errors.

use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum Error {
    Io { path: PathBuf, source: std::io::Error },
    Image { path: PathBuf, detail: String },
    Manifest { path: PathBuf, line: usize, detail: String },
    MissingImages(Vec<PathBuf>),
    Config { detail: String },
    Op(karte_core::OpError),
    Vocab(karte_core::vocab::VocabError),
    Dataset(karte_core::dataset::DatasetError),
    Checkpoint(karte_core::checkpoint::CheckpointError),
    Trace(karte_core::trace::TraceError),
    Metric(karte_core::bleu::MetricError),
    Train { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Image { path, detail } => write!(f, "{}: {detail}", path.display()),
            Error::Manifest { path, line, detail } => {
                write!(f, "{}:{line}: {detail}", path.display())
            }
            Error::MissingImages(paths) => {
                let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
                write!(f, "missing image files: {}", names.join(", "))
            }
            Error::Config { detail } => write!(f, "config: {detail}"),
            Error::Op(e) => write!(f, "{e}"),
            Error::Vocab(e) => write!(f, "{e}"),
            Error::Dataset(e) => write!(f, "{e}"),
            Error::Checkpoint(e) => write!(f, "{e}"),
            Error::Trace(e) => write!(f, "{e}"),
            Error::Metric(e) => write!(f, "{e}"),
            Error::Train { detail } => write!(f, "training: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

macro_rules! from_core {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for Error {
            fn from(e: $ty) -> Self {
                Error::$variant(e)
            }
        }
    };
}

from_core!(Op, karte_core::OpError);
from_core!(Vocab, karte_core::vocab::VocabError);
from_core!(Dataset, karte_core::dataset::DatasetError);
from_core!(Checkpoint, karte_core::checkpoint::CheckpointError);
from_core!(Trace, karte_core::trace::TraceError);
from_core!(Metric, karte_core::bleu::MetricError);

pub type Result<T> = std::result::Result<T, Error>;
