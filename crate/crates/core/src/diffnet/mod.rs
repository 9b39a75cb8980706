//! Layer-wise social influence diffusion.
//!
//! A user's layer-0 embedding fuses her free embedding with her features;
//! each diffusion layer pools the previous-layer embeddings of the users she
//! trusts and combines them with her own through a dense layer; the final
//! user vector adds the mean of her training items' fused vectors. Scores
//! are inner products with the fused item vectors.

mod backward;
mod config;
mod forward;
mod params;

pub use config::{DiffNetConfig, EmptyNeighborPolicy, Pooling};
pub use forward::{aggregate_neighbors, final_user_vector, ForwardTrace, Mode};
pub use params::{Dense, DiffNetParams, FusionInput, GradientSet};

use crate::data::Dataset;
pub use crate::error::ModelError;
use crate::numkernel::dot;
use crate::scoring::Factors;

/// A DiffNet model: configuration, parameters and a generation counter that
/// ties forward traces to the parameter values they were computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffNet {
    config: DiffNetConfig,
    params: DiffNetParams,
    num_users: usize,
    num_items: usize,
    generation: u64,
}

impl DiffNet {
    /// Builds a model with freshly initialized parameters sized for `dataset`.
    pub fn new(config: DiffNetConfig, dataset: &Dataset, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if config.use_user_features && dataset.user_features().is_none() {
            return Err(ModelError::MissingFeatures("user"));
        }
        if config.use_item_features && dataset.item_features().is_none() {
            return Err(ModelError::MissingFeatures("item"));
        }
        let params = DiffNetParams::init(&config, dataset, seed);
        Ok(DiffNet {
            config,
            params,
            num_users: dataset.num_users(),
            num_items: dataset.num_items(),
            generation: 0,
        })
    }

    /// Reassembles a model from stored parameters, checking every shape.
    pub fn from_params(
        config: DiffNetConfig,
        params: DiffNetParams,
        num_users: usize,
        num_items: usize,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        params.check_shapes(&config, num_users, num_items)?;
        Ok(DiffNet {
            config,
            params,
            num_users,
            num_items,
            generation: 0,
        })
    }

    pub fn config(&self) -> &DiffNetConfig {
        &self.config
    }

    pub fn params(&self) -> &DiffNetParams {
        &self.params
    }

    /// Mutable access; invalidates every outstanding trace.
    pub fn params_mut(&mut self) -> &mut DiffNetParams {
        self.generation += 1;
        &mut self.params
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub(crate) fn check_dataset(&self, dataset: &Dataset) -> Result<(), ModelError> {
        if dataset.num_users() != self.num_users || dataset.num_items() != self.num_items {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} users × {} items", self.num_users, self.num_items),
                actual: format!("{} users × {} items", dataset.num_users(), dataset.num_items()),
            });
        }
        let dims = |m: Option<&crate::numkernel::Matrix>| m.map_or(0, |m| m.cols());
        let (d1, d2) = self.params.feature_dims(&self.config);
        if self.config.use_user_features && dims(dataset.user_features()) != d1 {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{d1} user feature dims"),
                actual: format!("{}", dims(dataset.user_features())),
            });
        }
        if self.config.use_item_features && dims(dataset.item_features()) != d2 {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{d2} item feature dims"),
                actual: format!("{}", dims(dataset.item_features())),
            });
        }
        Ok(())
    }

    /// Score of `item` for `user` from a forward trace.
    pub fn predict(&self, trace: &ForwardTrace, user: usize, item: usize) -> Result<f64, ModelError> {
        if user >= self.num_users {
            return Err(ModelError::UnknownId { kind: "user", id: user });
        }
        if item >= self.num_items {
            return Err(ModelError::UnknownId { kind: "item", id: item });
        }
        Ok(dot(trace.v.row(item), trace.u.row(user)))
    }

    /// Final user and item vectors in inference mode.
    pub fn factors(&self, train: &Dataset) -> Result<Factors, ModelError> {
        let trace = self.forward(train, Mode::Inference)?;
        Ok(Factors {
            users: trace.u,
            items: trace.v,
        })
    }

    /// Folds the batch statistics of a training-mode trace into the running
    /// statistics of each batch-norm layer.
    pub fn commit_batch_stats(&mut self, trace: &ForwardTrace) {
        for (bn, cache) in self.params.batch_norms.iter_mut().zip(&trace.bn_caches) {
            if cache.batch_statistics {
                bn.update_running(cache);
            }
        }
    }
}
