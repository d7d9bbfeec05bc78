use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: String,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("manifest {}:{line}: {msg}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{stage}: training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Divergence {
        stage: String,
        epoch: usize,
        learning_rate: f64,
    },
}

impl Error {
    pub(crate) fn shape(op: &str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape {
            op: op.to_string(),
            left,
            right,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes a shape or divergence error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Shape { op, left, right } => Error::Shape {
                op: format!("{stage}/{op}"),
                left,
                right,
            },
            Error::Divergence {
                stage: inner,
                epoch,
                learning_rate,
            } => Error::Divergence {
                stage: if inner.is_empty() {
                    stage.to_string()
                } else {
                    format!("{stage}/{inner}")
                },
                epoch,
                learning_rate,
            },
            Error::UndefinedMetric(msg) => Error::UndefinedMetric(format!("{stage}: {msg}")),
            other => other,
        }
    }
}
