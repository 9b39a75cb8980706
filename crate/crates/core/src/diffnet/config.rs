use std::fmt;
use std::str::FromStr;

use crate::numkernel::Activation;

use super::ModelError;

/// How trusted users' embeddings are pooled into one vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pooling {
    Average,
    Max,
}

/// What a user with an empty trusted set receives as her pooled vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmptyNeighborPolicy {
    ZeroVector,
    SelfCopy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffNetConfig {
    pub embed_dim: usize,
    pub diffusion_depth: usize,
    pub pooling: Pooling,
    /// Nonlinearity of the user fusion layer.
    pub fusion_activation: Activation,
    /// Nonlinearity of the item fusion layer.
    pub item_fusion_activation: Activation,
    /// One activation per diffusion layer; length must equal `diffusion_depth`.
    pub diffusion_activations: Vec<Activation>,
    pub use_user_features: bool,
    pub use_item_features: bool,
    pub use_free_user_embed: bool,
    pub use_free_item_embed: bool,
    /// Keep a dense `D × D` fusion layer when an entity has no features.
    /// When false the fusion layer is bypassed and the free embedding is used
    /// as is.
    pub fuse_without_features: bool,
    pub use_batchnorm: bool,
    pub empty_neighbor_policy: EmptyNeighborPolicy,
}

impl DiffNetConfig {
    /// Sigmoid fusion, ReLU diffusion, average pooling, every input enabled.
    pub fn new(embed_dim: usize, diffusion_depth: usize) -> Self {
        DiffNetConfig {
            embed_dim,
            diffusion_depth,
            pooling: Pooling::Average,
            fusion_activation: Activation::Sigmoid,
            item_fusion_activation: Activation::Sigmoid,
            diffusion_activations: vec![Activation::Relu; diffusion_depth],
            use_user_features: true,
            use_item_features: true,
            use_free_user_embed: true,
            use_free_item_embed: true,
            fuse_without_features: false,
            use_batchnorm: true,
            empty_neighbor_policy: EmptyNeighborPolicy::ZeroVector,
        }
    }

    /// No features, no fusion layers: `h⁰ = p` and `v = q`.
    pub fn free_embeddings_only(embed_dim: usize, diffusion_depth: usize) -> Self {
        DiffNetConfig {
            use_user_features: false,
            use_item_features: false,
            ..Self::new(embed_dim, diffusion_depth)
        }
    }

    /// Changes the depth, resizing the activation list with its last entry
    /// (ReLU when empty).
    pub fn with_depth(mut self, depth: usize) -> Self {
        let fill = self.diffusion_activations.last().copied().unwrap_or(Activation::Relu);
        self.diffusion_activations.resize(depth, fill);
        self.diffusion_depth = depth;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0 {
            return Err(ModelError::Config("embed_dim must be at least 1".into()));
        }
        if self.diffusion_activations.len() != self.diffusion_depth {
            return Err(ModelError::Config(format!(
                "{} diffusion activations for depth {}",
                self.diffusion_activations.len(),
                self.diffusion_depth
            )));
        }
        if !self.use_user_features && !self.use_free_user_embed {
            return Err(ModelError::Config(
                "users need features, a free embedding, or both".into(),
            ));
        }
        if !self.use_item_features && !self.use_free_item_embed {
            return Err(ModelError::Config(
                "items need features, a free embedding, or both".into(),
            ));
        }
        Ok(())
    }

    pub fn user_fusion_bypassed(&self) -> bool {
        !self.use_user_features && !self.fuse_without_features
    }

    pub fn item_fusion_bypassed(&self) -> bool {
        !self.use_item_features && !self.fuse_without_features
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Average => "average",
            Pooling::Max => "max",
        })
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" | "mean" => Ok(Pooling::Average),
            "max" => Ok(Pooling::Max),
            other => Err(format!("unknown pooling `{other}` (expected average or max)")),
        }
    }
}

impl fmt::Display for EmptyNeighborPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmptyNeighborPolicy::ZeroVector => "zero_vector",
            EmptyNeighborPolicy::SelfCopy => "self_copy",
        })
    }
}

impl FromStr for EmptyNeighborPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_vector" | "zero" => Ok(EmptyNeighborPolicy::ZeroVector),
            "self_copy" | "self" => Ok(EmptyNeighborPolicy::SelfCopy),
            other => Err(format!("unknown empty-neighbor policy `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_settings() {
        let c = DiffNetConfig::new(64, 2);
        assert_eq!(c.diffusion_activations, vec![Activation::Relu; 2]);
        assert_eq!(c.fusion_activation, Activation::Sigmoid);
        assert_eq!(c.pooling, Pooling::Average);
        c.validate().unwrap();
    }

    #[test]
    fn needs_some_input_per_side() {
        let mut c = DiffNetConfig::new(4, 1);
        c.use_user_features = false;
        c.use_free_user_embed = false;
        assert!(c.validate().is_err());
        let mut c = DiffNetConfig::new(4, 1);
        c.use_item_features = false;
        c.use_free_item_embed = false;
        assert!(c.validate().is_err());
        assert!(DiffNetConfig::new(0, 1).validate().is_err());
    }

    #[test]
    fn depth_resizes_activations() {
        let c = DiffNetConfig::new(4, 2).with_depth(3);
        assert_eq!(c.diffusion_activations.len(), 3);
        assert!(c.clone().with_depth(0).validate().is_ok());
    }
}
