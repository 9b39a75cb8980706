use diffnet_core::data::Dataset;
use diffnet_core::diffnet::{aggregate_neighbors, DiffNet, DiffNetConfig, EmptyNeighborPolicy, Mode, Pooling};
use diffnet_core::numkernel::{Activation, Matrix};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(rng: &mut ChaCha8Rng, m: usize, n: usize, d1: usize, d2: usize) -> Dataset {
    let lists = (0..m)
        .map(|_| (0..n).filter(|_| rng.random::<f64>() < 0.4).collect())
        .collect();
    let trust = (0..m)
        .map(|u| (0..m).filter(|&v| v != u && rng.random::<f64>() < 0.5).collect())
        .collect();
    let x = Matrix::from_fn(m, d1, |_, _| rng.random_range(-1.0..1.0));
    let y = Matrix::from_fn(n, d2, |_, _| rng.random_range(-1.0..1.0));
    Dataset::from_parts(m, n, lists, trust, Some(x), Some(y)).unwrap()
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Relu => x.max(0.0),
        Activation::Identity => x,
    }
}

/// `act(W·input + b)` written out element by element.
fn layer(w: &Matrix, b: &Matrix, input: &[f64], a: Activation) -> Vec<f64> {
    (0..w.rows())
        .map(|r| {
            let mut s = b[(r, 0)];
            for (c, x) in input.iter().enumerate() {
                s += w[(r, c)] * x;
            }
            act(a, s)
        })
        .collect()
}

/// Every score, computed without touching the model's forward code.
fn oracle_scores(model: &DiffNet, ds: &Dataset) -> Vec<Vec<f64>> {
    let cfg = model.config();
    let p = model.params();
    let (m, n) = (ds.num_users(), ds.num_items());

    let mut v = Vec::new();
    for i in 0..n {
        let mut input = Vec::new();
        if cfg.use_free_item_embed {
            input.extend_from_slice(p.item_embed.as_ref().unwrap().row(i));
        }
        if cfg.use_item_features {
            input.extend_from_slice(ds.item_features().unwrap().row(i));
        }
        v.push(match &p.item_fusion {
            Some(f) => layer(&f.weight, &f.bias, &input, cfg.item_fusion_activation),
            None => input,
        });
    }

    let mut h: Vec<Vec<f64>> = Vec::new();
    for a in 0..m {
        let mut input = Vec::new();
        if cfg.use_user_features {
            input.extend_from_slice(ds.user_features().unwrap().row(a));
        }
        if cfg.use_free_user_embed {
            input.extend_from_slice(p.user_embed.as_ref().unwrap().row(a));
        }
        h.push(match &p.user_fusion {
            Some(f) => layer(&f.weight, &f.bias, &input, cfg.fusion_activation),
            None => input,
        });
    }

    let d = cfg.embed_dim;
    for k in 0..cfg.diffusion_depth {
        let mut next = Vec::new();
        for a in 0..m {
            let s = ds.trusted_by(a);
            let pooled: Vec<f64> = if s.is_empty() {
                match cfg.empty_neighbor_policy {
                    EmptyNeighborPolicy::ZeroVector => vec![0.0; d],
                    EmptyNeighborPolicy::SelfCopy => h[a].clone(),
                }
            } else {
                (0..d)
                    .map(|c| match cfg.pooling {
                        Pooling::Average => s.iter().map(|&b| h[b][c]).sum::<f64>() / s.len() as f64,
                        Pooling::Max => s.iter().map(|&b| h[b][c]).fold(f64::NEG_INFINITY, f64::max),
                    })
                    .collect()
            };
            let input: Vec<f64> = pooled.iter().chain(&h[a]).copied().collect();
            let dense = &p.diffusion[k];
            next.push(layer(&dense.weight, &dense.bias, &input, cfg.diffusion_activations[k]));
        }
        h = next;
    }

    (0..m)
        .map(|a| {
            let rated = ds.items_of(a);
            let mut u = h[a].clone();
            for c in 0..d {
                let mut mean = 0.0;
                for &j in rated {
                    mean += v[j][c];
                }
                if !rated.is_empty() {
                    u[c] += mean / rated.len() as f64;
                }
            }
            (0..n).map(|i| (0..d).map(|c| v[i][c] * u[c]).sum()).collect()
        })
        .collect()
}

const ACTS: [Activation; 3] = [Activation::Sigmoid, Activation::Relu, Activation::Identity];

#[derive(Debug, Clone)]
struct Case {
    seed: u64,
    users: usize,
    items: usize,
    dim: usize,
    depth: usize,
    max_pool: bool,
    self_copy: bool,
    flags: [bool; 5],
    acts: [usize; 5],
}

fn cases() -> impl Strategy<Value = Case> {
    (
        any::<u64>(),
        1usize..=5,
        1usize..=6,
        1usize..=4,
        0usize..=3,
        any::<bool>(),
        any::<bool>(),
        any::<[bool; 5]>(),
        proptest::array::uniform5(0usize..3),
    )
        .prop_map(|(seed, users, items, dim, depth, max_pool, self_copy, flags, acts)| Case {
            seed,
            users,
            items,
            dim,
            depth,
            max_pool,
            self_copy,
            flags,
            acts,
        })
}

fn build(case: &Case) -> Option<(DiffNet, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let ds = random_dataset(&mut rng, case.users, case.items, 1 + case.acts[3] % 3, 1 + case.acts[4] % 3);
    let mut cfg = DiffNetConfig::new(case.dim, case.depth);
    cfg.use_batchnorm = false;
    cfg.pooling = if case.max_pool { Pooling::Max } else { Pooling::Average };
    cfg.empty_neighbor_policy = if case.self_copy {
        EmptyNeighborPolicy::SelfCopy
    } else {
        EmptyNeighborPolicy::ZeroVector
    };
    [
        cfg.use_user_features,
        cfg.use_item_features,
        cfg.use_free_user_embed,
        cfg.use_free_item_embed,
        cfg.fuse_without_features,
    ] = case.flags;
    // keep the common full model well represented
    if case.seed % 2 == 0 {
        cfg.use_user_features = true;
        cfg.use_item_features = true;
        cfg.use_free_user_embed = true;
        cfg.use_free_item_embed = true;
    }
    cfg.fusion_activation = ACTS[case.acts[0]];
    cfg.item_fusion_activation = ACTS[case.acts[1]];
    cfg.diffusion_activations = vec![ACTS[case.acts[2]]; case.depth];
    let mut model = DiffNet::new(cfg, &ds, case.seed).ok()?;
    for t in model.params_mut().trainable_mut() {
        for x in t.as_mut_slice() {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    Some((model, ds))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn forward_matches_straight_line_oracle(case in cases()) {
        let Some((model, ds)) = build(&case) else {
            return Err(TestCaseError::reject("config without any input"));
        };
        let trace = model.forward(&ds, Mode::Inference).unwrap();
        let want = oracle_scores(&model, &ds);
        for a in 0..ds.num_users() {
            for i in 0..ds.num_items() {
                let got = model.predict(&trace, a, i).unwrap();
                prop_assert!((got - want[a][i]).abs() <= 1e-12, "user {} item {}: {} vs {}", a, i, got, want[a][i]);
            }
        }
        for t in trace.h.iter().chain([&trace.v, &trace.u]) {
            prop_assert!(t.is_finite());
        }
    }
}

#[test]
fn relabeling_users_permutes_everything() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (7, 9);
        let ds = random_dataset(&mut rng, m, n, 2, 3);
        let mut cfg = DiffNetConfig::new(4, 2);
        cfg.use_batchnorm = false;
        let model = DiffNet::new(cfg.clone(), &ds, seed).unwrap();

        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let mut lists = vec![Vec::new(); m];
        let mut trust = vec![Vec::new(); m];
        for a in 0..m {
            lists[perm[a]] = ds.items_of(a).to_vec();
            trust[perm[a]] = ds.trusted_by(a).iter().map(|&b| perm[b]).collect();
        }
        let x = ds.user_features().unwrap();
        let mut x2 = Matrix::zeros(m, x.cols());
        let p = model.params().user_embed.clone().unwrap();
        let mut p2 = Matrix::zeros(m, p.cols());
        for a in 0..m {
            x2.row_mut(perm[a]).copy_from_slice(x.row(a));
            p2.row_mut(perm[a]).copy_from_slice(p.row(a));
        }
        let ds2 = Dataset::from_parts(m, n, lists, trust, Some(x2), Some(ds.item_features().unwrap().clone())).unwrap();
        let mut params = model.params().clone();
        params.user_embed = Some(p2);
        let model2 = DiffNet::from_params(cfg, params, m, n).unwrap();

        let t1 = model.forward(&ds, Mode::Inference).unwrap();
        let t2 = model2.forward(&ds2, Mode::Inference).unwrap();
        for a in 0..m {
            for k in 0..t1.h.len() {
                for (x, y) in t1.h[k].row(a).iter().zip(t2.h[k].row(perm[a])) {
                    assert!((x - y).abs() <= 1e-12);
                }
            }
            for i in 0..n {
                let (s1, s2) = (model.predict(&t1, a, i).unwrap(), model2.predict(&t2, perm[a], i).unwrap());
                assert!((s1 - s2).abs() <= 1e-12, "{s1} vs {s2}");
            }
        }
    }
}

#[test]
fn average_pooling_ignores_neighbor_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = Matrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0));
    let mut s: Vec<usize> = vec![1, 4, 5, 8, 9];
    let base = aggregate_neighbors(&h, 0, &s, Pooling::Average, EmptyNeighborPolicy::ZeroVector);
    for _ in 0..20 {
        s.shuffle(&mut rng);
        let again = aggregate_neighbors(&h, 0, &s, Pooling::Average, EmptyNeighborPolicy::ZeroVector);
        for (x, y) in base.iter().zip(&again) {
            assert!((x - y).abs() <= 1e-15);
        }
    }
}

#[test]
fn aggregation_count_is_linear_in_depth_and_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for m in [5, 12, 30] {
        let ds = random_dataset(&mut rng, m, 8, 2, 2);
        let edges = ds.num_trust_edges();
        for depth in 0..=4 {
            let model = DiffNet::new(DiffNetConfig::new(3, depth), &ds, 0).unwrap();
            let trace = model.forward(&ds, Mode::Inference).unwrap();
            assert_eq!(trace.aggregation_ops, (depth * edges) as u64);
        }
    }
}
