//! Mapping between models and named checkpoint tensors.

use diffnet_core::baselines::{BprMf, SvdPlusPlus};
use diffnet_core::data::Dataset;
use diffnet_core::diffnet::{Dense, DiffNet, DiffNetConfig, DiffNetParams};
use diffnet_core::error::ModelError;
use diffnet_core::numkernel::BatchNorm;
use diffnet_core::scoring::Factors;
use diffnet_core::training::PairwiseModel;

use crate::checkpoint::{Checkpoint, CheckpointError, Tensor};
use crate::config::{ModelKind, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A trainable model that can be written to and rebuilt from tensors.
pub trait Persist: PairwiseModel + Sized {
    const KIND: ModelKind;

    fn build(cfg: &RunConfig, train: &Dataset, seed: u64) -> Result<Self, ModelError>;

    /// Names matching [`PairwiseModel::trainable`] order.
    fn trainable_names(&self) -> Vec<String>;

    fn write(&self, prefix: &str, out: &mut Vec<Tensor>);

    fn read(cfg: &RunConfig, ckpt: &Checkpoint, prefix: &str, users: usize, items: usize) -> Result<Self, PersistError>;
}

impl Persist for DiffNet {
    const KIND: ModelKind = ModelKind::DiffNet;

    fn build(cfg: &RunConfig, train: &Dataset, seed: u64) -> Result<Self, ModelError> {
        DiffNet::new(cfg.net.clone(), train, seed)
    }

    fn trainable_names(&self) -> Vec<String> {
        self.params().trainable_names()
    }

    fn write(&self, prefix: &str, out: &mut Vec<Tensor>) {
        let p = self.params();
        for (name, t) in self.trainable_names().into_iter().zip(p.trainable()) {
            out.push(Tensor::matrix(format!("{prefix}{name}"), t));
        }
        for (k, bn) in p.batch_norms.iter().enumerate() {
            out.push(Tensor::vector(format!("{prefix}bn.{k}.running_mean"), &bn.running_mean));
            out.push(Tensor::vector(format!("{prefix}bn.{k}.running_var"), &bn.running_var));
        }
    }

    fn read(cfg: &RunConfig, ckpt: &Checkpoint, prefix: &str, users: usize, items: usize) -> Result<Self, PersistError> {
        let net: &DiffNetConfig = &cfg.net;
        let m = |name: &str| ckpt.matrix(&format!("{prefix}{name}"));
        let optional = |name: &str| -> Result<Option<_>, CheckpointError> {
            if ckpt.get(&format!("{prefix}{name}")).is_some() {
                m(name).map(Some)
            } else {
                Ok(None)
            }
        };
        let dense = |w: &str, b: &str| -> Result<Option<Dense>, CheckpointError> {
            match optional(w)? {
                Some(weight) => Ok(Some(Dense { weight, bias: m(b)? })),
                None => Ok(None),
            }
        };
        let mut diffusion = Vec::new();
        for k in 0..net.diffusion_depth {
            diffusion.push(Dense {
                weight: m(&format!("W_diff.{k}"))?,
                bias: m(&format!("b_diff.{k}"))?,
            });
        }
        let mut batch_norms = Vec::new();
        if net.use_batchnorm {
            for k in 0..net.diffusion_depth {
                let mut bn = BatchNorm::new(net.embed_dim);
                bn.gamma = m(&format!("bn.{k}.gamma"))?;
                bn.beta = m(&format!("bn.{k}.beta"))?;
                bn.running_mean = ckpt.vector(&format!("{prefix}bn.{k}.running_mean"))?;
                bn.running_var = ckpt.vector(&format!("{prefix}bn.{k}.running_var"))?;
                batch_norms.push(bn);
            }
        }
        let params = DiffNetParams {
            user_embed: optional("P")?,
            item_embed: optional("Q")?,
            user_fusion: dense("W0", "b0")?,
            item_fusion: dense("F", "bF")?,
            diffusion,
            batch_norms,
        };
        Ok(DiffNet::from_params(net.clone(), params, users, items)?)
    }
}

impl Persist for BprMf {
    const KIND: ModelKind = ModelKind::Bpr;

    fn build(cfg: &RunConfig, train: &Dataset, seed: u64) -> Result<Self, ModelError> {
        Ok(BprMf::new(train.num_users(), train.num_items(), cfg.net.embed_dim, seed))
    }

    fn trainable_names(&self) -> Vec<String> {
        BprMf::trainable_names()
    }

    fn write(&self, prefix: &str, out: &mut Vec<Tensor>) {
        out.push(Tensor::matrix(format!("{prefix}U"), &self.users));
        out.push(Tensor::matrix(format!("{prefix}V"), &self.items));
    }

    fn read(_: &RunConfig, ckpt: &Checkpoint, prefix: &str, users: usize, items: usize) -> Result<Self, PersistError> {
        let model = BprMf::from_tables(ckpt.matrix(&format!("{prefix}U"))?, ckpt.matrix(&format!("{prefix}V"))?)?;
        check_counts(model.users.rows(), model.items.rows(), users, items)?;
        Ok(model)
    }
}

impl Persist for SvdPlusPlus {
    const KIND: ModelKind = ModelKind::SvdPp;

    fn build(cfg: &RunConfig, train: &Dataset, seed: u64) -> Result<Self, ModelError> {
        Ok(SvdPlusPlus::new(train.num_users(), train.num_items(), cfg.net.embed_dim, seed))
    }

    fn trainable_names(&self) -> Vec<String> {
        SvdPlusPlus::trainable_names()
    }

    fn write(&self, prefix: &str, out: &mut Vec<Tensor>) {
        out.push(Tensor::matrix(format!("{prefix}U"), &self.users));
        out.push(Tensor::matrix(format!("{prefix}V"), &self.items));
        out.push(Tensor::matrix(format!("{prefix}Yimp"), &self.implicit));
    }

    fn read(_: &RunConfig, ckpt: &Checkpoint, prefix: &str, users: usize, items: usize) -> Result<Self, PersistError> {
        let model = SvdPlusPlus {
            users: ckpt.matrix(&format!("{prefix}U"))?,
            items: ckpt.matrix(&format!("{prefix}V"))?,
            implicit: ckpt.matrix(&format!("{prefix}Yimp"))?,
        };
        check_counts(model.users.rows(), model.items.rows(), users, items)?;
        let d = model.users.cols();
        if model.items.cols() != d || model.implicit.shape() != model.items.shape() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("V and Yimp as {items}x{d}"),
                actual: format!("V {:?}, Yimp {:?}", model.items.shape(), model.implicit.shape()),
            }
            .into());
        }
        Ok(model)
    }
}

fn check_counts(users: usize, items: usize, want_users: usize, want_items: usize) -> Result<(), ModelError> {
    if (users, items) != (want_users, want_items) {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{want_users} users, {want_items} items"),
            actual: format!("{users} users, {items} items"),
        });
    }
    Ok(())
}

/// Any of the three model kinds, for commands that only score.
#[derive(Clone, Debug)]
pub enum AnyModel {
    DiffNet(DiffNet),
    Bpr(BprMf),
    SvdPp(SvdPlusPlus),
}

impl AnyModel {
    pub fn read(
        kind: ModelKind,
        cfg: &RunConfig,
        ckpt: &Checkpoint,
        prefix: &str,
        users: usize,
        items: usize,
    ) -> Result<Self, PersistError> {
        Ok(match kind {
            ModelKind::DiffNet => AnyModel::DiffNet(DiffNet::read(cfg, ckpt, prefix, users, items)?),
            ModelKind::Bpr => AnyModel::Bpr(BprMf::read(cfg, ckpt, prefix, users, items)?),
            ModelKind::SvdPp => AnyModel::SvdPp(SvdPlusPlus::read(cfg, ckpt, prefix, users, items)?),
        })
    }

    pub fn factors(&self, train: &Dataset) -> Result<Factors, ModelError> {
        match self {
            AnyModel::DiffNet(m) => m.factors(train),
            AnyModel::Bpr(m) => PairwiseModel::factors(m, train),
            AnyModel::SvdPp(m) => PairwiseModel::factors(m, train),
        }
    }
}
