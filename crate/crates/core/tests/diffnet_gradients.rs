use diffnet_core::data::Dataset;
use diffnet_core::diffnet::{DiffNet, DiffNetConfig, EmptyNeighborPolicy, Mode, Pooling};
use diffnet_core::gradcheck::{self, Tolerance};
use diffnet_core::numkernel::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 8 users, 10 items, 3-dimensional user and item features, a trust graph
/// with one isolated user.
fn fixture(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (8, 10);
    let interactions = (0..m)
        .map(|u| {
            let mut items: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.3).collect();
            if items.is_empty() {
                items.push(u % n);
            }
            items
        })
        .collect();
    let trust = (0..m)
        .map(|u| {
            if u == 3 {
                return Vec::new();
            }
            (0..m).filter(|&v| v != u && rng.random::<f64>() < 0.35).collect()
        })
        .collect();
    let x = Matrix::from_fn(m, 3, |_, _| rng.random_range(-1.0..1.0));
    let y = Matrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
    Dataset::from_parts(m, n, interactions, trust, Some(x), Some(y)).unwrap()
}

fn score_weights(seed: u64, ds: &Dataset) -> Vec<(usize, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    (0..40)
        .map(|_| {
            (
                rng.random_range(0..ds.num_users()),
                rng.random_range(0..ds.num_items()),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

fn run_check(cfg: DiffNetConfig, seed: u64) {
    let ds = fixture(seed);
    let weights = score_weights(seed, &ds);
    let mut model = DiffNet::new(cfg, &ds, seed).unwrap();
    // move biases and batch-norm shifts off zero so their gradients are generic
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for t in model.params_mut().trainable_mut() {
        for v in t.as_mut_slice() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let trace = model.forward(&ds, Mode::Training).unwrap();
    let grads = model.backward(&trace, &ds, &weights).unwrap();
    let objective = |m: &DiffNet| {
        let t = m.forward(&ds, Mode::Training).unwrap();
        weights.iter().map(|&(a, i, w)| w * m.predict(&t, a, i).unwrap()).sum::<f64>()
    };
    let report = gradcheck::check(
        &mut model,
        &grads.names,
        &grads.tensors,
        Tolerance::default(),
        |m| m.params_mut().trainable_mut(),
        objective,
    );
    assert!(report.passed(), "{:#?}", &report.failures[..report.failures.len().min(10)]);
}

#[test]
fn full_model_matches_finite_differences() {
    let mut cfg = DiffNetConfig::new(4, 2);
    cfg.use_batchnorm = false;
    for seed in 0..3 {
        run_check(cfg.clone(), seed);
    }
}

#[test]
fn max_pooling_and_self_copy_match_finite_differences() {
    let mut cfg = DiffNetConfig::new(4, 2);
    cfg.use_batchnorm = false;
    cfg.pooling = Pooling::Max;
    cfg.empty_neighbor_policy = EmptyNeighborPolicy::SelfCopy;
    run_check(cfg, 11);
}

#[test]
fn batch_norm_layers_match_finite_differences() {
    let cfg = DiffNetConfig::new(4, 2);
    assert!(cfg.use_batchnorm);
    run_check(cfg, 5);
}

#[test]
fn ablated_inputs_match_finite_differences() {
    let mut no_free_items = DiffNetConfig::new(4, 1);
    no_free_items.use_batchnorm = false;
    no_free_items.use_free_item_embed = false;
    run_check(no_free_items, 21);

    let mut no_free_users = DiffNetConfig::new(4, 1);
    no_free_users.use_batchnorm = false;
    no_free_users.use_free_user_embed = false;
    run_check(no_free_users, 22);

    let mut dense_free_only = DiffNetConfig::free_embeddings_only(4, 2);
    dense_free_only.use_batchnorm = false;
    dense_free_only.fuse_without_features = true;
    run_check(dense_free_only, 23);

    let mut bypass = DiffNetConfig::free_embeddings_only(4, 2);
    bypass.use_batchnorm = false;
    run_check(bypass, 24);
}
