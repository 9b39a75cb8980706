use thiserror::Error;

use crate::numkernel::KernelError;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("the dataset has no {0} features but the model is configured to use them")]
    MissingFeatures(&'static str),
    #[error("model was built for {expected} but the dataset has {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },
    #[error("trace was computed at parameter generation {trace}, parameters are now at {current}")]
    StaleTrace { trace: u64, current: u64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}
