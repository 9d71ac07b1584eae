use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown problem id `{0}`")]
    UnknownProblem(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("solver error: {0}")]
    Solver(#[from] moqn_core::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize {path}: {message}")]
    Serialize { path: PathBuf, message: String },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}
