//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate key (store={store}, week={week}, upc={upc}) at line {line}")]
    DuplicateKey {
        store: String,
        week: i64,
        upc: String,
        line: usize,
    },

    #[error("unrecognized pack size '{0}'")]
    UnitParse(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("field evaluation produced a non-finite value at u = {point:?}")]
    NonFiniteField { point: Vec<f64> },

    #[error("quadrature did not converge: last estimates {previous} and {last}")]
    Quadrature { previous: f64, last: f64 },

    #[error("graph is degenerate: {0}")]
    DegenerateGraph(String),

    #[error("non-finite gradient in parameter block '{0}'")]
    NonFiniteGradient(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing frozen graph in model state")]
    MissingFrozenGraph,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
