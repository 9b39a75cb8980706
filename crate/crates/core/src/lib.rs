//! Social recommendation by layer-wise influence diffusion over a trust graph.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkernel`]: dense matrices, activations, Adam and batch normalization.
//! * [`data`]: datasets, splits, synthetic social data and sparsity buckets.
//! * [`diffnet`]: the diffusion model's forward and backward passes.
//! * [`baselines`]: BPR matrix factorization and SVD++.
//! * [`training`]: negative sampling, user-grouped batching, the pairwise
//!   ranking loss and the epoch loop.
//! * [`eval`]: sampled top-N ranking metrics.

pub mod data;
pub mod numkernel;
pub mod seeds;
pub mod diffnet;
pub mod scoring;
pub mod error;
pub mod gradcheck;
pub mod eval;
pub mod training;
pub mod baselines;
