//! Pairwise ranking training: negative sampling, user-grouped mini-batches,
//! the logistic pairwise loss and the epoch loop with validation-based
//! early stopping.

mod batching;
mod loss;
mod trainer;

pub use batching::{make_batches, sample_pairs, TrainPair};
pub use loss::{pair_loss, pairwise_loss, PairwiseLoss};
pub use trainer::{train, EpochLog, TrainConfig, TrainData, TrainError, TrainOutcome, Trainer};

use crate::data::Dataset;
use crate::error::ModelError;
use crate::numkernel::Matrix;
use crate::scoring::Factors;

/// A model trainable with the pairwise ranking objective.
pub trait PairwiseModel: Clone {
    type Trace;

    /// Forward pass in training mode. May update non-trainable state such as
    /// batch-norm running statistics.
    fn forward_train(&mut self, train: &Dataset) -> Result<Self::Trace, ModelError>;

    fn trace_score(&self, trace: &Self::Trace, user: usize, item: usize) -> f64;

    /// Gradients of `Σ g · r̂(a, i)` in [`trainable`](Self::trainable) order.
    fn backward(
        &self,
        trace: &Self::Trace,
        train: &Dataset,
        score_grads: &[(usize, usize, f64)],
    ) -> Result<Vec<Matrix>, ModelError>;

    fn trainable(&self) -> Vec<&Matrix>;

    fn trainable_mut(&mut self) -> Vec<&mut Matrix>;

    /// Indices of the tensors carrying the L2 penalty.
    fn regularized(&self) -> Vec<usize>;

    /// Final user and item vectors for evaluation, in inference mode.
    fn factors(&self, train: &Dataset) -> Result<Factors, ModelError>;
}

impl PairwiseModel for crate::diffnet::DiffNet {
    type Trace = crate::diffnet::ForwardTrace;

    fn forward_train(&mut self, train: &Dataset) -> Result<Self::Trace, ModelError> {
        let trace = self.forward(train, crate::diffnet::Mode::Training)?;
        self.commit_batch_stats(&trace);
        Ok(trace)
    }

    fn trace_score(&self, trace: &Self::Trace, user: usize, item: usize) -> f64 {
        crate::numkernel::dot(trace.v.row(item), trace.u.row(user))
    }

    fn backward(
        &self,
        trace: &Self::Trace,
        train: &Dataset,
        score_grads: &[(usize, usize, f64)],
    ) -> Result<Vec<Matrix>, ModelError> {
        Ok(crate::diffnet::DiffNet::backward(self, trace, train, score_grads)?.tensors)
    }

    fn trainable(&self) -> Vec<&Matrix> {
        self.params().trainable()
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        self.params_mut().trainable_mut()
    }

    fn regularized(&self) -> Vec<usize> {
        self.params().regularized()
    }

    fn factors(&self, train: &Dataset) -> Result<Factors, ModelError> {
        crate::diffnet::DiffNet::factors(self, train)
    }
}
