use crate::data::Dataset;
use crate::numkernel::{Activation, Matrix};

use super::params::{Dense, DiffNetParams, FusionInput, GradientSet};
use super::{DiffNet, EmptyNeighborPolicy, ForwardTrace, ModelError, Pooling};

fn row_is_zero(row: &[f64]) -> bool {
    row.iter().all(|&x| x == 0.0)
}

/// Backpropagates `grad_out` (rows × D) through a fusion layer, accumulating
/// weight and bias gradients and returning the gradient of the free block.
fn fusion_backward(
    layer: &Dense,
    input: FusionInput,
    activation: Activation,
    inputs: &Matrix,
    pre: &Matrix,
    grad_out: &Matrix,
    grad_weight: &mut Matrix,
    grad_bias: &mut Matrix,
    mut grad_free: Option<&mut Matrix>,
) {
    let d = layer.out_dim();
    let mut dz = vec![0.0; d];
    let mut dinput = vec![0.0; input.width()];
    for r in 0..grad_out.rows() {
        let g = grad_out.row(r);
        if row_is_zero(g) {
            continue;
        }
        for c in 0..d {
            dz[c] = g[c] * activation.derivative(pre[(r, c)]);
        }
        grad_weight.add_outer(&dz, inputs.row(r));
        for (b, &z) in grad_bias.as_mut_slice().iter_mut().zip(&dz) {
            *b += z;
        }
        if let Some(gf) = grad_free.as_deref_mut() {
            dinput.fill(0.0);
            layer.weight.transpose_mul_vec(&dz, &mut dinput);
            let off = input.free_offset();
            for (o, &x) in gf.row_mut(r).iter_mut().zip(&dinput[off..off + input.free]) {
                *o += x;
            }
        }
    }
}

impl DiffNet {
    /// Exact gradients of `Σ g · r̂(a, i)` over `score_grads = [(a, i, g)]`
    /// with respect to every trainable tensor.
    ///
    /// `dataset` must be the one the trace was computed on.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        dataset: &Dataset,
        score_grads: &[(usize, usize, f64)],
    ) -> Result<GradientSet, ModelError> {
        if trace.generation != self.generation {
            return Err(ModelError::StaleTrace {
                trace: trace.generation,
                current: self.generation,
            });
        }
        self.check_dataset(dataset)?;
        let cfg = &self.config;
        let params = &self.params;
        let layout = params.layout();
        let mut grads = params.zero_gradients();
        let d = cfg.embed_dim;
        let (m, n) = (self.num_users, self.num_items);

        // prediction layer: r = v_i · u_a
        let mut du = Matrix::zeros(m, d);
        let mut dv = Matrix::zeros(n, d);
        for &(a, i, g) in score_grads {
            if a >= m {
                return Err(ModelError::UnknownId { kind: "user", id: a });
            }
            if i >= n {
                return Err(ModelError::UnknownId { kind: "item", id: i });
            }
            if g == 0.0 {
                continue;
            }
            for c in 0..d {
                du[(a, c)] += g * trace.v[(i, c)];
                dv[(i, c)] += g * trace.u[(a, c)];
            }
        }

        // u_a = h^K_a + mean(v_j, j ∈ R_a)
        let mut dh = du.clone();
        for a in 0..m {
            let items = dataset.items_of(a);
            if items.is_empty() || row_is_zero(du.row(a)) {
                continue;
            }
            let inv = 1.0 / items.len() as f64;
            for &j in items {
                for c in 0..d {
                    dv[(j, c)] += inv * du[(a, c)];
                }
            }
        }

        // diffusion layers, last to first
        for k in (0..cfg.diffusion_depth).rev() {
            let dense = &params.diffusion[k];
            let activation = cfg.diffusion_activations[k];
            let dact = match (params.batch_norms.get(k), trace.bn_caches.get(k)) {
                (Some(bn), Some(cache)) => {
                    let bn_grads = bn.backward(cache, &dh);
                    let (gi, bi) = layout.batch_norms[k];
                    grads.tensors[gi] = bn_grads.gamma;
                    grads.tensors[bi] = bn_grads.beta;
                    bn_grads.input
                }
                _ => dh,
            };
            let h_prev = &trace.h[k];
            let agg = &trace.h_agg[k];
            let pre = &trace.diffusion_pre[k];
            let mut dh_prev = Matrix::zeros(m, d);
            let (wi, bi) = layout.diffusion[k];
            let mut dz = vec![0.0; d];
            let mut dinput = vec![0.0; 2 * d];
            let mut input = vec![0.0; 2 * d];
            for a in 0..m {
                let g = dact.row(a);
                if row_is_zero(g) {
                    continue;
                }
                for c in 0..d {
                    dz[c] = g[c] * activation.derivative(pre[(a, c)]);
                }
                if row_is_zero(&dz) {
                    continue;
                }
                input[..d].copy_from_slice(agg.row(a));
                input[d..].copy_from_slice(h_prev.row(a));
                grads.tensors[wi].add_outer(&dz, &input);
                for (b, &z) in grads.tensors[bi].as_mut_slice().iter_mut().zip(&dz) {
                    *b += z;
                }
                dinput.fill(0.0);
                dense.weight.transpose_mul_vec(&dz, &mut dinput);
                let (dagg, dself) = dinput.split_at(d);
                for (o, &x) in dh_prev.row_mut(a).iter_mut().zip(dself) {
                    *o += x;
                }
                let trusted = dataset.trusted_by(a);
                if trusted.is_empty() {
                    if cfg.empty_neighbor_policy == EmptyNeighborPolicy::SelfCopy {
                        for (o, &x) in dh_prev.row_mut(a).iter_mut().zip(dagg) {
                            *o += x;
                        }
                    }
                    continue;
                }
                match cfg.pooling {
                    Pooling::Average => {
                        let inv = 1.0 / trusted.len() as f64;
                        for &b in trusted {
                            for (o, &x) in dh_prev.row_mut(b).iter_mut().zip(dagg) {
                                *o += inv * x;
                            }
                        }
                    }
                    Pooling::Max => {
                        let winners = &trace.argmax[k][a * d..(a + 1) * d];
                        for c in 0..d {
                            dh_prev[(winners[c], c)] += dagg[c];
                        }
                    }
                }
            }
            dh = dh_prev;
        }

        // fusion layers
        match (&params.user_fusion, layout.user_fusion) {
            (Some(layer), Some((wi, bi))) => {
                let input = DiffNetParams::user_fusion_input(cfg, dataset.user_feature_dim());
                let mut dp = params.user_embed.as_ref().map(|p| Matrix::zeros(p.rows(), p.cols()));
                let (mut gw, mut gb) = (grads.tensors[wi].clone(), grads.tensors[bi].clone());
                fusion_backward(
                    layer,
                    input,
                    cfg.fusion_activation,
                    trace.user_fusion_in.as_ref().expect("fusion input recorded"),
                    trace.user_fusion_pre.as_ref().expect("fusion pre-activation recorded"),
                    &dh,
                    &mut gw,
                    &mut gb,
                    dp.as_mut(),
                );
                grads.tensors[wi] = gw;
                grads.tensors[bi] = gb;
                if let (Some(dp), Some(pi)) = (dp, layout.user_embed) {
                    grads.tensors[pi] = dp;
                }
            }
            _ => {
                let pi = layout.user_embed.expect("bypassed fusion implies P");
                grads.tensors[pi] = dh;
            }
        }
        match (&params.item_fusion, layout.item_fusion) {
            (Some(layer), Some((wi, bi))) => {
                let input = DiffNetParams::item_fusion_input(cfg, dataset.item_feature_dim());
                let mut dq = params.item_embed.as_ref().map(|q| Matrix::zeros(q.rows(), q.cols()));
                let (mut gw, mut gb) = (grads.tensors[wi].clone(), grads.tensors[bi].clone());
                fusion_backward(
                    layer,
                    input,
                    cfg.item_fusion_activation,
                    trace.item_fusion_in.as_ref().expect("fusion input recorded"),
                    trace.item_fusion_pre.as_ref().expect("fusion pre-activation recorded"),
                    &dv,
                    &mut gw,
                    &mut gb,
                    dq.as_mut(),
                );
                grads.tensors[wi] = gw;
                grads.tensors[bi] = gb;
                if let (Some(dq), Some(qi)) = (dq, layout.item_embed) {
                    grads.tensors[qi] = dq;
                }
            }
            _ => {
                let qi = layout.item_embed.expect("bypassed fusion implies Q");
                grads.tensors[qi] = dv;
            }
        }
        Ok(grads)
    }
}
