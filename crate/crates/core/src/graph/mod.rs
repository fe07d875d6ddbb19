//! Graph datasets: the on-disk bundle format, its validating loader, and the
//! renormalized adjacency used by every GC layer.

mod bundle;
mod renorm;
mod synthetic;

pub use bundle::{load_bundle, write_bundle, BundleMeta, EdgeStats, GraphBundle, Splits};
pub use renorm::{renormalize, row_normalize_features, RenormalizedAdjacency};
pub use synthetic::{planted_partition, PlantedPartition};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{}: {source}", file.display())]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", file.display())]
    Line {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {message}", file.display())]
    File { file: PathBuf, message: String },
    #[error("adjacency is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("adjacency has negative weight {weight} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, weight: f64 },
    #[error("adjacency has a self-loop at node {0}")]
    SelfLoop(usize),
    #[error("adjacency must be square, got {0:?}")]
    NotSquare((usize, usize)),
}
