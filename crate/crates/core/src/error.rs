use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("path not found: {0}")]
    MissingPath(PathBuf),

    #[error("missing artifact {0}; run `{1}` first")]
    MissingArtifact(PathBuf, &'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what} at line {line}: {msg}")]
    Parse {
        what: String,
        line: usize,
        msg: String,
    },

    #[error("dataset {dataset}: {msg}")]
    Dataset { dataset: String, msg: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("label vocabulary is empty")]
    EmptyVocabulary,

    #[error("invalid parameter {name}: {msg}")]
    Parameter { name: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("objective became non-finite at sweep {sweep}: {value}")]
    NonFiniteObjective { sweep: usize, value: f64 },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("unknown task ids: {}", .0.join(", "))]
    UnknownTasks(Vec<String>),

    #[error("qrels are empty")]
    EmptyQrels,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn param(name: &'static str, msg: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            msg: msg.into(),
        }
    }
}
