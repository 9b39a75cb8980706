use std::fmt;
use std::fmt::Write as _;

use log::{debug, info, warn};
use thiserror::Error;

use super::batching::{make_batches, sample_pairs, TrainPair};
use super::loss::pairwise_loss;
use super::PairwiseModel;
use crate::data::Dataset;
use crate::error::ModelError;
use crate::eval::{evaluate, EvalConfig, EvalError};
use crate::numkernel::{AdamConfig, AdamState, KernelError, Matrix};
use crate::seeds;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Target number of pairs per mini-batch; a user's pairs are never split.
    pub batch_size: usize,
    pub neg_samples_per_pos: usize,
    pub lambda: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub rng_seed: u64,
    /// Sampled negatives per user for the per-epoch validation ranking.
    pub validation_negatives: usize,
    /// Redraw negatives every epoch; when false the first epoch's pairs are
    /// reused throughout.
    pub resample_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 512,
            neg_samples_per_pos: 10,
            lambda: 0.001,
            max_epochs: 100,
            early_stop_patience: 10,
            rng_seed: 0,
            validation_negatives: 1000,
            resample_negatives: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.neg_samples_per_pos == 0 {
            return fail("neg_samples_per_pos must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be non-negative");
        }
        Ok(())
    }
}

/// The datasets seen during training.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub train: &'a Dataset,
    /// Held-out positives ranked after every epoch.
    pub validation: Option<&'a Dataset>,
}

impl TrainData<'_> {
    fn has_validation(&self) -> bool {
        self.validation.is_some_and(|v| v.num_interactions() > 0)
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_hr10: f64,
    pub val_ndcg10: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.9}\t{:.6}\t{:.6}",
            self.epoch, self.mean_loss, self.val_hr10, self.val_ndcg10
        )
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        /// Human-readable dump of the offending batch.
        dump: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<KernelError> for TrainError {
    fn from(e: KernelError) -> Self {
        TrainError::Model(ModelError::Kernel(e))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Best-validation parameters, or the last ones without validation.
    pub model: M,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Resumable epoch loop.
#[derive(Clone, Debug)]
pub struct Trainer<M: PairwiseModel> {
    config: TrainConfig,
    model: M,
    adam: AdamState,
    /// Number of finished epochs.
    epoch: usize,
    best: Option<(usize, f64, M)>,
    stale_epochs: usize,
    log: Vec<EpochLog>,
}

impl<M: PairwiseModel> Trainer<M> {
    pub fn new(model: M, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let shapes: Vec<_> = model.trainable().iter().map(|t| t.shape()).collect();
        let adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &shapes);
        Ok(Trainer {
            config,
            model,
            adam,
            epoch: 0,
            best: None,
            stale_epochs: 0,
            log: Vec::new(),
        })
    }

    /// Rebuilds a trainer from saved state: the current parameters, the
    /// optimizer moments, the number of finished epochs and the best epoch
    /// so far with its validation NDCG@10 and parameters.
    pub fn resume(
        model: M,
        config: TrainConfig,
        adam: AdamState,
        epoch: usize,
        best: Option<(usize, f64, M)>,
        stale_epochs: usize,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let expected: Vec<_> = model.trainable().iter().map(|t| t.shape()).collect();
        let found: Vec<_> = adam.first_moment.iter().map(|t| t.shape()).collect();
        if expected != found {
            return Err(TrainError::Config(format!(
                "optimizer state shapes {found:?} do not match the model {expected:?}"
            )));
        }
        Ok(Trainer {
            config,
            model,
            adam,
            epoch,
            best,
            stale_epochs,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn best(&self) -> Option<(usize, f64, &M)> {
        self.best.as_ref().map(|(e, s, m)| (*e, *s, m))
    }

    pub fn stale_epochs(&self) -> usize {
        self.stale_epochs
    }

    /// Log lines produced by this trainer since construction.
    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    fn should_stop(&self) -> bool {
        self.config.early_stop_patience > 0 && self.stale_epochs >= self.config.early_stop_patience
    }

    /// True once `max_epochs` is reached or patience has run out.
    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.max_epochs || self.should_stop()
    }

    /// Rejects early stopping without validation data.
    pub fn check_data(&self, data: TrainData<'_>) -> Result<(), TrainError> {
        if self.config.early_stop_patience > 0 && !data.has_validation() {
            return Err(TrainError::Config(
                "early stopping needs a non-empty validation split".into(),
            ));
        }
        Ok(())
    }

    /// Runs until `max_epochs` or early stopping.
    pub fn run(&mut self, data: TrainData<'_>) -> Result<bool, TrainError> {
        self.check_data(data)?;
        while !self.is_done() {
            self.run_epoch(data)?;
        }
        if self.should_stop() {
            info!("early stop after {} stale epochs", self.stale_epochs);
        }
        Ok(self.should_stop())
    }

    pub fn run_epoch(&mut self, data: TrainData<'_>) -> Result<EpochLog, TrainError> {
        let train = data.train;
        let epoch = self.epoch + 1;
        let draw = if self.config.resample_negatives { epoch } else { 1 };
        let mut rng = seeds::stream(self.config.rng_seed, seeds::streams::SAMPLING, draw as u64);
        let pairs = sample_pairs(train, self.config.neg_samples_per_pos, &mut rng);
        let batches = make_batches(&pairs, self.config.batch_size);
        let mut loss_sum = 0.0;
        for (b, range) in batches.into_iter().enumerate() {
            loss_sum += self.step_batch(train, &pairs[range], epoch, b)?;
        }
        let mean_loss = if pairs.is_empty() { 0.0 } else { loss_sum / pairs.len() as f64 };

        let (val_hr10, val_ndcg10) = if data.has_validation() {
            let validation = data.validation.expect("checked");
            let factors = self.model.factors(train)?;
            let config = EvalConfig {
                top_n: vec![10],
                num_sampled_negatives: self.config.validation_negatives,
                num_repetitions: 1,
                rng_seed: seeds::derive_seed(self.config.rng_seed, seeds::streams::EVAL, u64::MAX),
                bucket_boundaries: Vec::new(),
            };
            let r = evaluate(&factors, validation, &[train, validation], train, &config)?;
            (r.hr(10), r.ndcg(10))
        } else {
            (f64::NAN, f64::NAN)
        };

        self.epoch = epoch;
        if val_ndcg10.is_nan() {
            self.best = Some((epoch, f64::NAN, self.model.clone()));
        } else if self.best.as_ref().is_none_or(|(_, s, _)| val_ndcg10 > *s || s.is_nan()) {
            self.best = Some((epoch, val_ndcg10, self.model.clone()));
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
        }
        let line = EpochLog {
            epoch,
            mean_loss,
            val_hr10,
            val_ndcg10,
        };
        info!("epoch {line}");
        self.log.push(line);
        Ok(line)
    }

    /// One forward/backward/Adam step; returns the batch's total loss.
    fn step_batch(&mut self, train: &Dataset, batch: &[TrainPair], epoch: usize, index: usize) -> Result<f64, TrainError> {
        let trace = self.model.forward_train(train)?;
        let scores: Vec<(f64, f64)> = batch
            .iter()
            .map(|p| {
                (
                    self.model.trace_score(&trace, p.user, p.positive),
                    self.model.trace_score(&trace, p.user, p.negative),
                )
            })
            .collect();
        let regularized = self.model.regularized();
        let loss = {
            let tensors = self.model.trainable();
            let reg: Vec<&Matrix> = regularized.iter().map(|&k| tensors[k]).collect();
            pairwise_loss(&scores, &reg, self.config.lambda)
        };
        if !loss.total.is_finite() {
            let dump = self.dump(batch, &scores, loss.total);
            warn!("aborting: non-finite loss at epoch {epoch}, batch {index}");
            return Err(TrainError::NonFiniteLoss {
                epoch,
                batch: index,
                dump,
            });
        }
        debug!("epoch {epoch} batch {index}: {} pairs, loss {}", batch.len(), loss.total);

        let mut score_grads = Vec::with_capacity(2 * batch.len());
        for (p, &g) in batch.iter().zip(&loss.diff_grads) {
            score_grads.push((p.user, p.positive, g));
            score_grads.push((p.user, p.negative, -g));
        }
        let mut grads = self.model.backward(&trace, train, &score_grads)?;
        if self.config.lambda > 0.0 {
            let tensors = self.model.trainable();
            for &k in &regularized {
                grads[k].add_scaled(tensors[k], 2.0 * self.config.lambda)?;
            }
        }
        let grad_refs: Vec<&Matrix> = grads.iter().collect();
        let mut params = self.model.trainable_mut();
        self.adam.step(&mut params, &grad_refs)?;
        Ok(loss.total)
    }

    fn dump(&self, batch: &[TrainPair], scores: &[(f64, f64)], total: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "total_loss\t{total}");
        let _ = writeln!(out, "adam_step\t{}", self.adam.step);
        for (k, t) in self.model.trainable().iter().enumerate() {
            let _ = writeln!(
                out,
                "tensor\t{k}\t{}x{}\tsq_norm={}\tfirst_non_finite={:?}",
                t.rows(),
                t.cols(),
                t.squared_norm(),
                t.first_non_finite()
            );
        }
        let _ = writeln!(out, "user\tpositive\tnegative\tpos_score\tneg_score");
        for (p, (s, n)) in batch.iter().zip(scores) {
            let _ = writeln!(out, "{}\t{}\t{}\t{s}\t{n}", p.user, p.positive, p.negative);
        }
        out
    }

    pub fn finish(self) -> TrainOutcome<M> {
        let stopped_early = self.should_stop() && self.epoch < self.config.max_epochs;
        let (best_epoch, model) = match self.best {
            Some((e, _, m)) => (Some(e), m),
            None => (None, self.model),
        };
        TrainOutcome {
            model,
            log: self.log,
            best_epoch,
            stopped_early,
        }
    }
}

/// Trains `model` from scratch.
pub fn train<M: PairwiseModel>(model: M, data: TrainData<'_>, config: &TrainConfig) -> Result<TrainOutcome<M>, TrainError> {
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(data)?;
    Ok(trainer.finish())
}
