//! Implicit-feedback datasets with a directed trust graph and optional
//! dense side features: loading, splitting, synthesis and sparsity buckets.

mod buckets;
mod dataset;
mod io;
mod split;
mod synth;

pub use buckets::{bucket_labels, bucket_users};
pub use dataset::{Dataset, IdMap};
pub use io::{load_dataset, read_split_manifest, save_dataset, write_split_manifest, DatasetPaths};
pub use split::{split, Split, SplitSpec};
pub use synth::{synthesize, SynthConfig, Synthetic};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: feature dimension mismatch, expected {expected} values, found {actual}")]
    FeatureDimension {
        path: PathBuf,
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
