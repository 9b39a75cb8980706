//! Dense numeric primitives shared by the recommender models.
//!
//! Everything here works on caller-owned buffers. Matrices are row-major and
//! generic over the scalar type; the models use `f64` throughout so that
//! finite-difference gradient checks stay meaningful, while `f32` is available
//! for callers that only need forward evaluation.

mod activation;
mod adam;
mod batchnorm;
mod matrix;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache, BatchNormGrads};
pub use matrix::{affine, affine_into, dot, Matrix, Real};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite gradient in tensor {tensor} at flat index {index}")]
    NonFiniteGradient { tensor: usize, index: usize },
    #[error("parameter/gradient count mismatch: {params} parameters, {grads} gradients")]
    TensorCountMismatch { params: usize, grads: usize },
}
