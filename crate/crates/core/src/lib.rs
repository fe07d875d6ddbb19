//! Multi-task graph convolutional networks: a shared GC encoder trained for
//! node classification alongside self-supervised reconstruction heads.

pub mod config;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod tasks;
pub mod tensor;
pub mod train;

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use error::{Error, Result};
pub use graph::{load_bundle, GraphBundle};
pub use train::{aggregate, train_run, RunReport};
