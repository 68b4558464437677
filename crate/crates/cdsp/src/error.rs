use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] cdsp_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{}", .0)]
    Input(String),
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }
}
