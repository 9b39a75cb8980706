use rand::Rng;

use crate::data::Dataset;
use crate::numkernel::{BatchNorm, Matrix};
use crate::seeds::{self, streams};

use super::{DiffNetConfig, ModelError};

/// Weight and bias of one fully connected layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub weight: Matrix,
    /// `out × 1`.
    pub bias: Matrix,
}

impl Dense {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Dense {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: Matrix::zeros(out_dim, 1),
        }
    }

    /// Glorot-uniform weights, zero bias.
    fn glorot(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Dense {
            weight: Matrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-limit..=limit)),
            bias: Matrix::zeros(out_dim, 1),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Which blocks feed a fusion layer, in input order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusionInput {
    /// Width of the feature block (0 when features are off).
    pub features: usize,
    /// Width of the free-embedding block (0 when the free embedding is off).
    pub free: usize,
    /// True when the feature block comes first (users: `[x, p]`); items use
    /// `[q, y]`.
    pub features_first: bool,
}

impl FusionInput {
    pub fn width(&self) -> usize {
        self.features + self.free
    }

    /// Offset of the free-embedding block inside the fused input.
    pub fn free_offset(&self) -> usize {
        if self.features_first {
            self.features
        } else {
            0
        }
    }

    pub fn feature_offset(&self) -> usize {
        if self.features_first {
            0
        } else {
            self.free
        }
    }

    /// Concatenates the blocks of one entity into `out`.
    pub fn gather(&self, features: Option<&[f64]>, free: Option<&[f64]>, out: &mut Vec<f64>) {
        out.clear();
        let (first, second) = if self.features_first {
            (features, free)
        } else {
            (free, features)
        };
        if let Some(a) = first {
            out.extend_from_slice(a);
        }
        if let Some(b) = second {
            out.extend_from_slice(b);
        }
        debug_assert_eq!(out.len(), self.width());
    }
}

/// Every tensor of a DiffNet model. Free embeddings are stored one row per
/// entity (`M × D` and `N × D`).
#[derive(Clone, Debug, PartialEq)]
pub struct DiffNetParams {
    pub user_embed: Option<Matrix>,
    pub item_embed: Option<Matrix>,
    /// `W⁰`: `D × (d1 + D)` over `[x_a, p_a]`; absent when bypassed.
    pub user_fusion: Option<Dense>,
    /// `F`: `D × (D + d2)` over `[q_i, y_i]`; absent when bypassed.
    pub item_fusion: Option<Dense>,
    /// One `D × 2D` layer per diffusion step over `[pooled, own]`.
    pub diffusion: Vec<Dense>,
    /// One per diffusion layer when batch norm is enabled.
    pub batch_norms: Vec<BatchNorm>,
}

/// Gradients for the trainable tensors, in [`DiffNetParams::trainable`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub names: Vec<String>,
    pub tensors: Vec<Matrix>,
}

impl GradientSet {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|k| &self.tensors[k])
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.as_slice().iter().all(|&v| v == 0.0))
    }
}

/// Slots of each tensor inside the trainable list.
#[derive(Clone, Debug, Default)]
pub(crate) struct Layout {
    pub user_embed: Option<usize>,
    pub item_embed: Option<usize>,
    pub user_fusion: Option<(usize, usize)>,
    pub item_fusion: Option<(usize, usize)>,
    pub diffusion: Vec<(usize, usize)>,
    pub batch_norms: Vec<(usize, usize)>,
}

impl DiffNetParams {
    pub fn user_fusion_input(config: &DiffNetConfig, d1: usize) -> FusionInput {
        FusionInput {
            features: if config.use_user_features { d1 } else { 0 },
            free: if config.use_free_user_embed { config.embed_dim } else { 0 },
            features_first: true,
        }
    }

    pub fn item_fusion_input(config: &DiffNetConfig, d2: usize) -> FusionInput {
        FusionInput {
            features: if config.use_item_features { d2 } else { 0 },
            free: if config.use_free_item_embed { config.embed_dim } else { 0 },
            features_first: false,
        }
    }

    /// Free embeddings uniform in ±0.1/√D; dense layers Glorot-uniform with
    /// zero bias; batch norm at unit scale and zero shift.
    pub fn init(config: &DiffNetConfig, dataset: &Dataset, seed: u64) -> Self {
        let mut rng = seeds::stream(seed, streams::INIT, 0);
        let d = config.embed_dim;
        let scale = 0.1 / (d as f64).sqrt();
        let embed = |rows: usize, rng: &mut seeds::StreamRng| {
            Matrix::from_fn(rows, d, |_, _| rng.random_range(-scale..=scale))
        };
        let user_embed = config
            .use_free_user_embed
            .then(|| embed(dataset.num_users(), &mut rng));
        let item_embed = config
            .use_free_item_embed
            .then(|| embed(dataset.num_items(), &mut rng));

        let user_in = Self::user_fusion_input(config, dataset.user_feature_dim());
        let item_in = Self::item_fusion_input(config, dataset.item_feature_dim());
        let user_fusion = (!config.user_fusion_bypassed()).then(|| Dense::glorot(d, user_in.width(), &mut rng));
        let item_fusion = (!config.item_fusion_bypassed()).then(|| Dense::glorot(d, item_in.width(), &mut rng));
        let diffusion = (0..config.diffusion_depth)
            .map(|_| Dense::glorot(d, 2 * d, &mut rng))
            .collect();
        let batch_norms = if config.use_batchnorm {
            (0..config.diffusion_depth).map(|_| BatchNorm::new(d)).collect()
        } else {
            Vec::new()
        };
        DiffNetParams {
            user_embed,
            item_embed,
            user_fusion,
            item_fusion,
            diffusion,
            batch_norms,
        }
    }

    /// Feature widths implied by the fusion weights.
    pub fn feature_dims(&self, config: &DiffNetConfig) -> (usize, usize) {
        let free_user = if config.use_free_user_embed { config.embed_dim } else { 0 };
        let free_item = if config.use_free_item_embed { config.embed_dim } else { 0 };
        let d1 = match (&self.user_fusion, config.use_user_features) {
            (Some(f), true) => f.in_dim() - free_user,
            _ => 0,
        };
        let d2 = match (&self.item_fusion, config.use_item_features) {
            (Some(f), true) => f.in_dim() - free_item,
            _ => 0,
        };
        (d1, d2)
    }

    pub(crate) fn check_shapes(&self, config: &DiffNetConfig, m: usize, n: usize) -> Result<(), ModelError> {
        let d = config.embed_dim;
        let mismatch = |what: &str, expected: String, actual: String| ModelError::ShapeMismatch {
            expected: format!("{what} {expected}"),
            actual,
        };
        let check = |what: &str, t: Option<&Matrix>, want: Option<(usize, usize)>| -> Result<(), ModelError> {
            match (t.map(Matrix::shape), want) {
                (a, b) if a == b => Ok(()),
                (a, b) => Err(mismatch(what, format!("{b:?}"), format!("{a:?}"))),
            }
        };
        check("P", self.user_embed.as_ref(), config.use_free_user_embed.then_some((m, d)))?;
        check("Q", self.item_embed.as_ref(), config.use_free_item_embed.then_some((n, d)))?;
        let (d1, d2) = self.feature_dims(config);
        let uw = Self::user_fusion_input(config, d1).width();
        let iw = Self::item_fusion_input(config, d2).width();
        check(
            "W0",
            self.user_fusion.as_ref().map(|f| &f.weight),
            (!config.user_fusion_bypassed()).then_some((d, uw)),
        )?;
        check(
            "F",
            self.item_fusion.as_ref().map(|f| &f.weight),
            (!config.item_fusion_bypassed()).then_some((d, iw)),
        )?;
        for f in self.user_fusion.iter().chain(&self.item_fusion) {
            check("fusion bias", Some(&f.bias), Some((d, 1)))?;
        }
        if self.diffusion.len() != config.diffusion_depth {
            return Err(mismatch(
                "diffusion layers",
                config.diffusion_depth.to_string(),
                self.diffusion.len().to_string(),
            ));
        }
        for layer in &self.diffusion {
            check("W_diff", Some(&layer.weight), Some((d, 2 * d)))?;
            check("b_diff", Some(&layer.bias), Some((d, 1)))?;
        }
        let want_bn = if config.use_batchnorm { config.diffusion_depth } else { 0 };
        if self.batch_norms.len() != want_bn || self.batch_norms.iter().any(|b| b.features() != d) {
            return Err(mismatch("batch norms", want_bn.to_string(), self.batch_norms.len().to_string()));
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut next = 0;
        let mut slot = || {
            next += 1;
            next - 1
        };
        let mut layout = Layout {
            user_embed: self.user_embed.as_ref().map(|_| slot()),
            item_embed: self.item_embed.as_ref().map(|_| slot()),
            ..Default::default()
        };
        layout.user_fusion = self.user_fusion.as_ref().map(|_| (slot(), slot()));
        layout.item_fusion = self.item_fusion.as_ref().map(|_| (slot(), slot()));
        layout.diffusion = self.diffusion.iter().map(|_| (slot(), slot())).collect();
        layout.batch_norms = self.batch_norms.iter().map(|_| (slot(), slot())).collect();
        layout
    }

    /// Names of the trainable tensors, in a fixed order.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.user_embed.is_some() {
            names.push("P".to_string());
        }
        if self.item_embed.is_some() {
            names.push("Q".to_string());
        }
        if self.user_fusion.is_some() {
            names.extend(["W0".to_string(), "b0".to_string()]);
        }
        if self.item_fusion.is_some() {
            names.extend(["F".to_string(), "bF".to_string()]);
        }
        for k in 0..self.diffusion.len() {
            names.extend([format!("W_diff.{k}"), format!("b_diff.{k}")]);
        }
        for k in 0..self.batch_norms.len() {
            names.extend([format!("bn.{k}.gamma"), format!("bn.{k}.beta")]);
        }
        names
    }

    pub fn trainable(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = Vec::new();
        out.extend(self.user_embed.as_ref());
        out.extend(self.item_embed.as_ref());
        for f in self.user_fusion.iter().chain(&self.item_fusion).chain(&self.diffusion) {
            out.push(&f.weight);
            out.push(&f.bias);
        }
        for bn in &self.batch_norms {
            out.push(&bn.gamma);
            out.push(&bn.beta);
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        out.extend(self.user_embed.as_mut());
        out.extend(self.item_embed.as_mut());
        for f in self
            .user_fusion
            .iter_mut()
            .chain(self.item_fusion.iter_mut())
            .chain(self.diffusion.iter_mut())
        {
            out.push(&mut f.weight);
            out.push(&mut f.bias);
        }
        for bn in &mut self.batch_norms {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out
    }

    /// Indices (into [`trainable`](Self::trainable)) of the L2-regularized
    /// free embeddings.
    pub fn regularized(&self) -> Vec<usize> {
        let layout = self.layout();
        layout.user_embed.into_iter().chain(layout.item_embed).collect()
    }

    pub fn zero_gradients(&self) -> GradientSet {
        GradientSet {
            names: self.trainable_names(),
            tensors: self
                .trainable()
                .into_iter()
                .map(|t| Matrix::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }
}
