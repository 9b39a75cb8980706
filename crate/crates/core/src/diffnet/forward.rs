use crate::data::Dataset;
use crate::numkernel::{affine_into, Activation, BatchNormCache, Matrix};

use super::params::{Dense, DiffNetParams, FusionInput};
use super::{DiffNet, EmptyNeighborPolicy, ModelError, Pooling};

/// Whether batch norm uses batch statistics or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Everything computed by one forward pass over all users and items.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub(crate) generation: u64,
    pub mode: Mode,
    /// Fusion inputs and pre-activations, present when the layer is not bypassed.
    pub(crate) user_fusion_in: Option<Matrix>,
    pub(crate) user_fusion_pre: Option<Matrix>,
    pub(crate) item_fusion_in: Option<Matrix>,
    pub(crate) item_fusion_pre: Option<Matrix>,
    /// `h[k]`, `k = 0..=K`, each `M × D`.
    pub h: Vec<Matrix>,
    /// Pooled trusted-user vectors feeding layer `k + 1`, each `M × D`.
    pub h_agg: Vec<Matrix>,
    pub(crate) diffusion_pre: Vec<Matrix>,
    pub(crate) bn_caches: Vec<BatchNormCache>,
    /// For max pooling: the user whose entry won each `(a, c)` slot.
    pub(crate) argmax: Vec<Vec<usize>>,
    /// Fused item vectors, `N × D`.
    pub v: Matrix,
    /// Final user vectors, `M × D`.
    pub u: Matrix,
    /// Number of trusted-user vectors read while pooling.
    pub aggregation_ops: u64,
}

/// Pools the layer-`k` embeddings of the users in `trusted`.
pub fn aggregate_neighbors(
    h: &Matrix,
    user: usize,
    trusted: &[usize],
    pooling: Pooling,
    policy: EmptyNeighborPolicy,
) -> Vec<f64> {
    let mut out = vec![0.0; h.cols()];
    pool_into(h, user, trusted, pooling, policy, &mut out, None);
    out
}

/// Returns the number of neighbor vectors read.
fn pool_into(
    h: &Matrix,
    user: usize,
    trusted: &[usize],
    pooling: Pooling,
    policy: EmptyNeighborPolicy,
    out: &mut [f64],
    mut argmax: Option<&mut [usize]>,
) -> u64 {
    if trusted.is_empty() {
        match policy {
            EmptyNeighborPolicy::ZeroVector => out.fill(0.0),
            EmptyNeighborPolicy::SelfCopy => out.copy_from_slice(h.row(user)),
        }
        if let Some(am) = argmax.as_deref_mut() {
            am.fill(user);
        }
        return 0;
    }
    match pooling {
        Pooling::Average => {
            out.fill(0.0);
            for &b in trusted {
                for (o, &x) in out.iter_mut().zip(h.row(b)) {
                    *o += x;
                }
            }
            let inv = 1.0 / trusted.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        Pooling::Max => {
            out.copy_from_slice(h.row(trusted[0]));
            if let Some(am) = argmax.as_deref_mut() {
                am.fill(trusted[0]);
            }
            for &b in &trusted[1..] {
                for (c, &x) in h.row(b).iter().enumerate() {
                    if x > out[c] {
                        out[c] = x;
                        if let Some(am) = argmax.as_deref_mut() {
                            am[c] = b;
                        }
                    }
                }
            }
        }
    }
    trusted.len() as u64
}

/// `u_a = h^K_a + mean of v_i over the user's training items`.
pub fn final_user_vector(h_last: &[f64], v: &Matrix, items: &[usize]) -> Vec<f64> {
    let mut u = h_last.to_vec();
    if !items.is_empty() {
        let inv = 1.0 / items.len() as f64;
        for &i in items {
            for (o, &x) in u.iter_mut().zip(v.row(i)) {
                *o += inv * x;
            }
        }
    }
    u
}

struct Fused {
    input: Option<Matrix>,
    pre: Option<Matrix>,
    out: Matrix,
}

fn fuse_all(
    rows: usize,
    layer: Option<&Dense>,
    input: FusionInput,
    features: Option<&Matrix>,
    free: Option<&Matrix>,
    activation: Activation,
) -> Result<Fused, ModelError> {
    let Some(layer) = layer else {
        let free = free.expect("bypassed fusion implies a free embedding");
        return Ok(Fused {
            input: None,
            pre: None,
            out: free.clone(),
        });
    };
    let d = layer.out_dim();
    let mut inputs = Matrix::zeros(rows, input.width());
    let mut pre = Matrix::zeros(rows, d);
    let mut out = Matrix::zeros(rows, d);
    let mut buf = Vec::with_capacity(input.width());
    for r in 0..rows {
        let x = if input.features > 0 { features.map(|m| m.row(r)) } else { None };
        let p = if input.free > 0 { free.map(|m| m.row(r)) } else { None };
        input.gather(x, p, &mut buf);
        inputs.row_mut(r).copy_from_slice(&buf);
        affine_into(&layer.weight, &buf, Some(layer.bias.as_slice()), pre.row_mut(r))?;
        for (o, &z) in out.row_mut(r).iter_mut().zip(pre.row(r)) {
            *o = activation.apply(z);
        }
    }
    Ok(Fused {
        input: Some(inputs),
        pre: Some(pre),
        out,
    })
}

impl DiffNet {
    /// Layer-0 user embedding of one user.
    pub fn fuse_user(&self, user: usize, dataset: &Dataset) -> Result<Vec<f64>, ModelError> {
        if user >= self.num_users {
            return Err(ModelError::UnknownId { kind: "user", id: user });
        }
        let p = self.params.user_embed.as_ref().map(|m| m.row(user));
        let Some(layer) = &self.params.user_fusion else {
            return Ok(p.expect("bypass needs P").to_vec());
        };
        let input = DiffNetParams::user_fusion_input(&self.config, dataset.user_feature_dim());
        let x = self
            .config
            .use_user_features
            .then(|| dataset.user_features().map(|m| m.row(user)))
            .flatten();
        let mut buf = Vec::new();
        input.gather(x, p, &mut buf);
        let mut z = vec![0.0; layer.out_dim()];
        affine_into(&layer.weight, &buf, Some(layer.bias.as_slice()), &mut z)?;
        Ok(self.config.fusion_activation.apply_slice(&z))
    }

    /// Fused vector of one item.
    pub fn fuse_item(&self, item: usize, dataset: &Dataset) -> Result<Vec<f64>, ModelError> {
        if item >= self.num_items {
            return Err(ModelError::UnknownId { kind: "item", id: item });
        }
        let q = self.params.item_embed.as_ref().map(|m| m.row(item));
        let Some(layer) = &self.params.item_fusion else {
            return Ok(q.expect("bypass needs Q").to_vec());
        };
        let input = DiffNetParams::item_fusion_input(&self.config, dataset.item_feature_dim());
        let y = self
            .config
            .use_item_features
            .then(|| dataset.item_features().map(|m| m.row(item)))
            .flatten();
        let mut buf = Vec::new();
        input.gather(y, q, &mut buf);
        let mut z = vec![0.0; layer.out_dim()];
        affine_into(&layer.weight, &buf, Some(layer.bias.as_slice()), &mut z)?;
        Ok(self.config.item_fusion_activation.apply_slice(&z))
    }

    /// One diffusion layer: `h^{k+1}_a = s(W^k [pool(h^k_b : b ∈ S_a), h^k_a] + b^k)`,
    /// followed by batch norm when enabled.
    pub fn diffuse(&self, h: &Matrix, dataset: &Dataset, layer: usize, mode: Mode) -> Result<Matrix, ModelError> {
        let step = self.diffusion_step(h, dataset, layer, mode)?;
        Ok(step.out)
    }

    fn diffusion_step(&self, h: &Matrix, dataset: &Dataset, k: usize, mode: Mode) -> Result<DiffusionStep, ModelError> {
        let m = h.rows();
        let d = h.cols();
        let dense = &self.params.diffusion[k];
        let activation = self.config.diffusion_activations[k];
        let max_pool = self.config.pooling == Pooling::Max;
        let mut agg = Matrix::zeros(m, d);
        let mut pre = Matrix::zeros(m, d);
        let mut act = Matrix::zeros(m, d);
        let mut argmax = if max_pool { vec![0usize; m * d] } else { Vec::new() };
        let mut ops = 0;
        let mut input = vec![0.0; 2 * d];
        for a in 0..m {
            let am = max_pool.then(|| &mut argmax[a * d..(a + 1) * d]);
            ops += pool_into(
                h,
                a,
                dataset.trusted_by(a),
                self.config.pooling,
                self.config.empty_neighbor_policy,
                agg.row_mut(a),
                am,
            );
            input[..d].copy_from_slice(agg.row(a));
            input[d..].copy_from_slice(h.row(a));
            affine_into(&dense.weight, &input, Some(dense.bias.as_slice()), pre.row_mut(a))?;
            for (o, &z) in act.row_mut(a).iter_mut().zip(pre.row(a)) {
                *o = activation.apply(z);
            }
        }
        let (out, bn_cache) = match self.params.batch_norms.get(k) {
            Some(bn) => {
                let (out, cache) = bn.forward_in_mode(&act, mode == Mode::Training);
                (out, Some(cache))
            }
            None => (act, None),
        };
        Ok(DiffusionStep {
            agg,
            pre,
            out,
            bn_cache,
            argmax,
            ops,
        })
    }

    /// Full forward pass over every user and item of `dataset`, whose
    /// interactions are the training positives used in the final user vector.
    pub fn forward(&self, dataset: &Dataset, mode: Mode) -> Result<ForwardTrace, ModelError> {
        self.check_dataset(dataset)?;
        let cfg = &self.config;
        let p = &self.params;
        let users = fuse_all(
            self.num_users,
            p.user_fusion.as_ref(),
            DiffNetParams::user_fusion_input(cfg, dataset.user_feature_dim()),
            dataset.user_features(),
            p.user_embed.as_ref(),
            cfg.fusion_activation,
        )?;
        let items = fuse_all(
            self.num_items,
            p.item_fusion.as_ref(),
            DiffNetParams::item_fusion_input(cfg, dataset.item_feature_dim()),
            dataset.item_features(),
            p.item_embed.as_ref(),
            cfg.item_fusion_activation,
        )?;

        let mut h = vec![users.out];
        let mut h_agg = Vec::with_capacity(cfg.diffusion_depth);
        let mut diffusion_pre = Vec::with_capacity(cfg.diffusion_depth);
        let mut bn_caches = Vec::new();
        let mut argmax = Vec::new();
        let mut aggregation_ops = 0;
        for k in 0..cfg.diffusion_depth {
            let step = self.diffusion_step(&h[k], dataset, k, mode)?;
            aggregation_ops += step.ops;
            h_agg.push(step.agg);
            diffusion_pre.push(step.pre);
            bn_caches.extend(step.bn_cache);
            argmax.push(step.argmax);
            h.push(step.out);
        }

        let v = items.out;
        let last = &h[cfg.diffusion_depth];
        let mut u = Matrix::zeros(self.num_users, cfg.embed_dim);
        for a in 0..self.num_users {
            u.row_mut(a)
                .copy_from_slice(&final_user_vector(last.row(a), &v, dataset.items_of(a)));
        }

        Ok(ForwardTrace {
            generation: self.generation,
            mode,
            user_fusion_in: users.input,
            user_fusion_pre: users.pre,
            item_fusion_in: items.input,
            item_fusion_pre: items.pre,
            h,
            h_agg,
            diffusion_pre,
            bn_caches,
            argmax,
            v,
            u,
            aggregation_ops,
        })
    }
}

struct DiffusionStep {
    agg: Matrix,
    pre: Matrix,
    out: Matrix,
    bn_cache: Option<BatchNormCache>,
    argmax: Vec<usize>,
    ops: u64,
}

impl ForwardTrace {
    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(&self.h_agg).all(Matrix::is_finite) && self.u.is_finite() && self.v.is_finite()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}
