use diffnet_core::baselines::BprMf;
use diffnet_core::data::{split, synthesize, Dataset, SplitSpec, SynthConfig};
use diffnet_core::diffnet::{DiffNet, DiffNetConfig, Mode};
use diffnet_core::error::ModelError;
use diffnet_core::gradcheck::{self, Tolerance};
use diffnet_core::numkernel::Matrix;
use diffnet_core::scoring::Factors;
use diffnet_core::training::{
    make_batches, pair_loss, sample_pairs, train, PairwiseModel, TrainConfig, TrainData, TrainError, Trainer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 20 users, 30 items, 5 positives each.
fn tiny() -> Dataset {
    let cfg = SynthConfig {
        num_users: 20,
        num_items: 30,
        avg_degree: 3.0,
        positives_per_user: 5,
        latent_dim: 4,
        ..SynthConfig::default()
    };
    synthesize(&cfg).unwrap().dataset
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        max_epochs: 20,
        early_stop_patience: 0,
        rng_seed: 3,
        validation_negatives: 20,
        ..TrainConfig::default()
    }
}

fn tiny_model(ds: &Dataset) -> DiffNet {
    let mut cfg = DiffNetConfig::new(8, 2);
    cfg.use_batchnorm = false;
    DiffNet::new(cfg, ds, 1).unwrap()
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let ds = tiny();
    let model = tiny_model(&ds);
    let config = TrainConfig {
        max_epochs: 0,
        ..tiny_config()
    };
    let out = train(model.clone(), TrainData { train: &ds, validation: None }, &config).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.model.params(), model.params());
}

#[test]
fn mean_loss_falls_over_twenty_epochs() {
    let ds = tiny();
    let out = train(tiny_model(&ds), TrainData { train: &ds, validation: None }, &tiny_config()).unwrap();
    assert_eq!(out.log.len(), 20);
    let first = out.log[0].mean_loss;
    let last = out.log[19].mean_loss;
    assert!(last < first, "epoch 1 {first}, epoch 20 {last}");
    assert!(out.log.iter().all(|l| l.mean_loss > 0.0));
}

#[test]
fn fixed_negatives_reuse_the_first_draw() {
    let ds = tiny();
    let config = TrainConfig {
        resample_negatives: false,
        learning_rate: 1e-12,
        max_epochs: 3,
        ..tiny_config()
    };
    // with a negligible step the loss only changes if the pairs change
    let fixed = train(tiny_model(&ds), TrainData { train: &ds, validation: None }, &config).unwrap().log;
    let drift = (fixed[2].mean_loss - fixed[0].mean_loss).abs();
    assert!(drift < 1e-9, "{drift}");
    let config = TrainConfig {
        resample_negatives: true,
        ..config
    };
    let fresh = train(tiny_model(&ds), TrainData { train: &ds, validation: None }, &config).unwrap().log;
    assert!((fresh[2].mean_loss - fresh[0].mean_loss).abs() > 1e-6);
    assert_eq!(fresh[0].mean_loss, fixed[0].mean_loss);
}

#[test]
fn fixed_seeds_give_identical_logs() {
    let ds = tiny();
    let parts = split(&ds, &SplitSpec::default()).unwrap();
    let data = TrainData {
        train: &parts.train,
        validation: Some(&parts.validation),
    };
    let config = TrainConfig {
        max_epochs: 5,
        ..tiny_config()
    };
    let a = train(tiny_model(&parts.train), data, &config).unwrap();
    let b = train(tiny_model(&parts.train), data, &config).unwrap();
    let render = |log: &[diffnet_core::training::EpochLog]| log.iter().map(|l| format!("{l}\n")).collect::<String>();
    assert_eq!(render(&a.log), render(&b.log));
    for (x, y) in a.log.iter().zip(&b.log) {
        assert_eq!(x.mean_loss.to_bits(), y.mean_loss.to_bits());
    }
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn resuming_continues_the_same_trajectory() {
    let ds = tiny();
    let data = TrainData { train: &ds, validation: None };
    let config = TrainConfig {
        max_epochs: 6,
        ..tiny_config()
    };
    let straight = train(tiny_model(&ds), data, &config).unwrap();

    let mut first = Trainer::new(
        tiny_model(&ds),
        TrainConfig {
            max_epochs: 3,
            ..config.clone()
        },
    )
    .unwrap();
    first.run(data).unwrap();
    let mut second = Trainer::resume(
        first.model().clone(),
        config.clone(),
        first.adam().clone(),
        first.epochs_done(),
        None,
        0,
    )
    .unwrap();
    second.run(data).unwrap();
    let render = |log: &[diffnet_core::training::EpochLog]| log.iter().map(|l| format!("{l}\n")).collect::<String>();
    let resumed = render(first.log()) + &render(second.log());
    assert_eq!(resumed, render(&straight.log));
    assert_eq!(second.finish().model.params(), straight.model.params());
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let ds = tiny();
    let parts = split(&ds, &SplitSpec::default()).unwrap();
    let config = TrainConfig {
        max_epochs: 40,
        early_stop_patience: 2,
        learning_rate: 0.05,
        ..tiny_config()
    };
    let data = TrainData {
        train: &parts.train,
        validation: Some(&parts.validation),
    };
    let out = train(tiny_model(&parts.train), data, &config).unwrap();
    let best = out.best_epoch.unwrap();
    let best_ndcg = out.log[best - 1].val_ndcg10;
    assert!(out.log.iter().all(|l| l.val_ndcg10 <= best_ndcg));
    if out.stopped_early {
        assert_eq!(out.log.len(), best + 2);
    }

    let no_validation = TrainData { train: &parts.train, validation: None };
    assert!(matches!(
        train(tiny_model(&parts.train), no_validation, &config),
        Err(TrainError::Config(_))
    ));
}

#[test]
fn bpr_baseline_trains_with_the_same_harness() {
    let ds = tiny();
    let out = train(
        BprMf::new(20, 30, 8, 0),
        TrainData { train: &ds, validation: None },
        &tiny_config(),
    )
    .unwrap();
    assert!(out.log[19].mean_loss < out.log[0].mean_loss);
}

#[test]
fn invalid_configs_are_rejected() {
    let ds = tiny();
    for bad in [
        TrainConfig { neg_samples_per_pos: 0, ..tiny_config() },
        TrainConfig { lambda: -1.0, ..tiny_config() },
        TrainConfig { batch_size: 0, ..tiny_config() },
    ] {
        assert!(matches!(Trainer::new(tiny_model(&ds), bad), Err(TrainError::Config(_))));
    }
}

/// Scores every pair as NaN.
#[derive(Clone, Debug)]
struct Broken(Matrix);

impl PairwiseModel for Broken {
    type Trace = ();
    fn forward_train(&mut self, _: &Dataset) -> Result<(), ModelError> {
        Ok(())
    }
    fn trace_score(&self, _: &(), _: usize, _: usize) -> f64 {
        f64::NAN
    }
    fn backward(&self, _: &(), _: &Dataset, _: &[(usize, usize, f64)]) -> Result<Vec<Matrix>, ModelError> {
        Ok(vec![self.0.clone()])
    }
    fn trainable(&self) -> Vec<&Matrix> {
        vec![&self.0]
    }
    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.0]
    }
    fn regularized(&self) -> Vec<usize> {
        vec![0]
    }
    fn factors(&self, _: &Dataset) -> Result<Factors, ModelError> {
        unreachable!()
    }
}

#[test]
fn nan_loss_aborts_with_a_dump() {
    let ds = tiny();
    let err = train(Broken(Matrix::zeros(2, 2)), TrainData { train: &ds, validation: None }, &tiny_config()).unwrap_err();
    match err {
        TrainError::NonFiniteLoss { epoch, batch, dump } => {
            assert_eq!((epoch, batch), (1, 0));
            assert!(dump.contains("user\tpositive\tnegative"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

/// The full pairwise objective, penalty included, against finite differences.
#[test]
fn total_objective_gradient_matches_finite_differences() {
    let ds = tiny();
    let mut cfg = DiffNetConfig::new(4, 2);
    cfg.use_batchnorm = false;
    let mut model = DiffNet::new(cfg, &ds, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs = sample_pairs(&ds, 2, &mut rng);
    let batch = &pairs[make_batches(&pairs, 30)[0].clone()];
    let lambda = 0.05;

    let objective = |m: &DiffNet| {
        let t = m.forward(&ds, Mode::Training).unwrap();
        let ranking: f64 = batch
            .iter()
            .map(|p| pair_loss(m.predict(&t, p.user, p.positive).unwrap() - m.predict(&t, p.user, p.negative).unwrap()))
            .sum();
        let params = m.params();
        ranking
            + lambda
                * (params.user_embed.as_ref().unwrap().squared_norm()
                    + params.item_embed.as_ref().unwrap().squared_norm())
    };

    // analytic: −σ(−d) per pair, ± onto the two scores, plus 2λθ on P and Q
    let trace = model.forward(&ds, Mode::Training).unwrap();
    let mut score_grads = Vec::new();
    for p in batch {
        let d = model.predict(&trace, p.user, p.positive).unwrap() - model.predict(&trace, p.user, p.negative).unwrap();
        let g = -1.0 / (1.0 + d.exp());
        score_grads.push((p.user, p.positive, g));
        score_grads.push((p.user, p.negative, -g));
    }
    let mut grads = model.backward(&trace, &ds, &score_grads).unwrap();
    for &k in &model.params().regularized() {
        let theta = model.params().trainable()[k].clone();
        grads.tensors[k].add_scaled(&theta, 2.0 * lambda).unwrap();
    }
    let report = gradcheck::check(
        &mut model,
        &grads.names,
        &grads.tensors,
        Tolerance::default(),
        |m| m.params_mut().trainable_mut(),
        objective,
    );
    assert!(report.passed(), "{:#?}", report.failures);
}
