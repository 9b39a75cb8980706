//! Flat `key = value` run configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use diffnet_core::data::{SplitSpec, SynthConfig};
use diffnet_core::diffnet::{DiffNetConfig, EmptyNeighborPolicy, Pooling};
use diffnet_core::eval::EvalConfig;
use diffnet_core::numkernel::Activation;
use diffnet_core::seeds::{self, streams};
use diffnet_core::training::TrainConfig;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{key}`{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownKey { key: String, line: Option<usize> },
    #[error("`{key}`: {message}")]
    Field { key: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    DiffNet,
    Bpr,
    SvdPp,
}

impl ModelKind {
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::DiffNet => 0,
            ModelKind::Bpr => 1,
            ModelKind::SvdPp => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        [ModelKind::DiffNet, ModelKind::Bpr, ModelKind::SvdPp]
            .into_iter()
            .find(|k| k.tag() == tag)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::DiffNet => "diffnet",
            ModelKind::Bpr => "bpr",
            ModelKind::SvdPp => "svdpp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "diffnet" => Ok(ModelKind::DiffNet),
            "bpr" | "bpr-mf" => Ok(ModelKind::Bpr),
            "svdpp" | "svd++" => Ok(ModelKind::SvdPp),
            other => Err(format!("unknown model kind `{other}` (expected diffnet, bpr or svdpp)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Files,
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Files => "files",
        })
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" | "synth" => Ok(DataSource::Synthetic),
            "files" => Ok(DataSource::Files),
            other => Err(format!("unknown data source `{other}` (expected synthetic or files)")),
        }
    }
}

/// Input ablations of the fusion layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoUserFeatures,
    NoItemFeatures,
    NoFeatures,
    NoUserEmbed,
    NoItemEmbed,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoUserFeatures,
        Variant::NoItemFeatures,
        Variant::NoFeatures,
        Variant::NoUserEmbed,
        Variant::NoItemEmbed,
    ];

    pub fn apply(self, cfg: &mut DiffNetConfig) {
        match self {
            Variant::Full => {}
            Variant::NoUserFeatures => cfg.use_user_features = false,
            Variant::NoItemFeatures => cfg.use_item_features = false,
            Variant::NoFeatures => {
                cfg.use_user_features = false;
                cfg.use_item_features = false;
            }
            Variant::NoUserEmbed => cfg.use_free_user_embed = false,
            Variant::NoItemEmbed => cfg.use_free_item_embed = false,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoUserFeatures => "X=0",
            Variant::NoItemFeatures => "Y=0",
            Variant::NoFeatures => "X=Y=0",
            Variant::NoUserEmbed => "P=0",
            Variant::NoItemEmbed => "Q=0",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| format!("unknown ablation variant `{s}` (expected full, X=0, Y=0, X=Y=0, P=0 or Q=0)"))
    }
}

/// Everything one command needs. Sub-config seeds are not set directly; they
/// are derived from `seed` by [`RunConfig::resolved`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub data: DataSource,
    pub ratings: Option<PathBuf>,
    pub trust: Option<PathBuf>,
    pub user_features: Option<PathBuf>,
    pub item_features: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub split: SplitSpec,
    pub synth: SynthConfig,
    pub net: DiffNetConfig,
    /// Shared by every diffusion layer.
    pub diffusion_activation: Activation,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate_depths: Vec<usize>,
    pub ablate_variants: Vec<Variant>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::DiffNet,
            seed: 0,
            data: DataSource::Synthetic,
            ratings: None,
            trust: None,
            user_features: None,
            item_features: None,
            output_dir: PathBuf::from("runs"),
            split: SplitSpec::default(),
            synth: SynthConfig::default(),
            net: DiffNetConfig::new(64, 2),
            diffusion_activation: Activation::Relu,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ablate_depths: vec![0, 1, 2, 3],
            ablate_variants: Variant::ALL.to_vec(),
        }
    }
}

fn list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse::<T>().map_err(|e| e.to_string())).collect()
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn parse_path(s: &str) -> Option<PathBuf> {
    (!s.is_empty()).then(|| PathBuf::from(s))
}

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("cannot parse `{s}`: {e}"))
}

/// Every key, in canonical order.
pub const KEYS: &[&str] = &[
    "model.kind",
    "seed",
    "data",
    "ratings",
    "trust",
    "user_features",
    "item_features",
    "output_dir",
    "split.test_fraction",
    "split.validation_fraction",
    "synth.num_users",
    "synth.num_items",
    "synth.avg_degree",
    "synth.homophily_strength",
    "synth.latent_dim",
    "synth.positives_per_user",
    "synth.feature_noise",
    "synth.communities",
    "synth.cross_community_rate",
    "model.embed_dim",
    "model.depth",
    "model.pooling",
    "model.fusion_activation",
    "model.item_fusion_activation",
    "model.diffusion_activation",
    "model.use_user_features",
    "model.use_item_features",
    "model.use_free_user_embed",
    "model.use_free_item_embed",
    "model.fuse_without_features",
    "model.use_batchnorm",
    "model.empty_neighbor_policy",
    "train.learning_rate",
    "train.batch_size",
    "train.neg_samples_per_pos",
    "train.lambda",
    "train.max_epochs",
    "train.early_stop_patience",
    "train.validation_negatives",
    "train.resample_negatives",
    "eval.top_n",
    "eval.num_sampled_negatives",
    "eval.num_repetitions",
    "eval.buckets",
    "ablate.depths",
    "ablate.variants",
];

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<String> {
        let n = &self.net;
        Some(match key {
            "model.kind" => self.model.to_string(),
            "seed" => self.seed.to_string(),
            "data" => self.data.to_string(),
            "ratings" => path_text(&self.ratings),
            "trust" => path_text(&self.trust),
            "user_features" => path_text(&self.user_features),
            "item_features" => path_text(&self.item_features),
            "output_dir" => self.output_dir.display().to_string(),
            "split.test_fraction" => format!("{:?}", self.split.test_fraction),
            "split.validation_fraction" => format!("{:?}", self.split.validation_fraction),
            "synth.num_users" => self.synth.num_users.to_string(),
            "synth.num_items" => self.synth.num_items.to_string(),
            "synth.avg_degree" => format!("{:?}", self.synth.avg_degree),
            "synth.homophily_strength" => format!("{:?}", self.synth.homophily_strength),
            "synth.latent_dim" => self.synth.latent_dim.to_string(),
            "synth.positives_per_user" => self.synth.positives_per_user.to_string(),
            "synth.feature_noise" => format!("{:?}", self.synth.feature_noise),
            "synth.communities" => self.synth.communities.to_string(),
            "synth.cross_community_rate" => format!("{:?}", self.synth.cross_community_rate),
            "model.embed_dim" => n.embed_dim.to_string(),
            "model.depth" => n.diffusion_depth.to_string(),
            "model.pooling" => n.pooling.to_string(),
            "model.fusion_activation" => n.fusion_activation.to_string(),
            "model.item_fusion_activation" => n.item_fusion_activation.to_string(),
            "model.diffusion_activation" => self.diffusion_activation.to_string(),
            "model.use_user_features" => n.use_user_features.to_string(),
            "model.use_item_features" => n.use_item_features.to_string(),
            "model.use_free_user_embed" => n.use_free_user_embed.to_string(),
            "model.use_free_item_embed" => n.use_free_item_embed.to_string(),
            "model.fuse_without_features" => n.fuse_without_features.to_string(),
            "model.use_batchnorm" => n.use_batchnorm.to_string(),
            "model.empty_neighbor_policy" => n.empty_neighbor_policy.to_string(),
            "train.learning_rate" => format!("{:?}", self.train.learning_rate),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.neg_samples_per_pos" => self.train.neg_samples_per_pos.to_string(),
            "train.lambda" => format!("{:?}", self.train.lambda),
            "train.max_epochs" => self.train.max_epochs.to_string(),
            "train.early_stop_patience" => self.train.early_stop_patience.to_string(),
            "train.validation_negatives" => self.train.validation_negatives.to_string(),
            "train.resample_negatives" => self.train.resample_negatives.to_string(),
            "eval.top_n" => list(&self.eval.top_n),
            "eval.num_sampled_negatives" => self.eval.num_sampled_negatives.to_string(),
            "eval.num_repetitions" => self.eval.num_repetitions.to_string(),
            "eval.buckets" => list(&self.eval.bucket_boundaries),
            "ablate.depths" => list(&self.ablate_depths),
            "ablate.variants" => list(&self.ablate_variants),
            _ => return None,
        })
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                line: None,
            });
        }
        let act = &mut self.diffusion_activation;
        let n = &mut self.net;
        let r: Result<(), String> = (|| {
            match key {
                "model.kind" => self.model = parse(v)?,
                "seed" => self.seed = parse(v)?,
                "data" => self.data = parse(v)?,
                "ratings" => self.ratings = parse_path(v),
                "trust" => self.trust = parse_path(v),
                "user_features" => self.user_features = parse_path(v),
                "item_features" => self.item_features = parse_path(v),
                "output_dir" => self.output_dir = PathBuf::from(v),
                "split.test_fraction" => self.split.test_fraction = parse(v)?,
                "split.validation_fraction" => self.split.validation_fraction = parse(v)?,
                "synth.num_users" => self.synth.num_users = parse(v)?,
                "synth.num_items" => self.synth.num_items = parse(v)?,
                "synth.avg_degree" => self.synth.avg_degree = parse(v)?,
                "synth.homophily_strength" => self.synth.homophily_strength = parse(v)?,
                "synth.latent_dim" => self.synth.latent_dim = parse(v)?,
                "synth.positives_per_user" => self.synth.positives_per_user = parse(v)?,
                "synth.feature_noise" => self.synth.feature_noise = parse(v)?,
                "synth.communities" => self.synth.communities = parse(v)?,
                "synth.cross_community_rate" => self.synth.cross_community_rate = parse(v)?,
                "model.embed_dim" => n.embed_dim = parse(v)?,
                "model.depth" => {
                    n.diffusion_depth = parse(v)?;
                    n.diffusion_activations = vec![*act; n.diffusion_depth];
                }
                "model.pooling" => n.pooling = parse::<Pooling>(v)?,
                "model.fusion_activation" => n.fusion_activation = parse(v)?,
                "model.item_fusion_activation" => n.item_fusion_activation = parse(v)?,
                "model.diffusion_activation" => {
                    *act = parse(v)?;
                    n.diffusion_activations = vec![*act; n.diffusion_depth];
                }
                "model.use_user_features" => n.use_user_features = parse(v)?,
                "model.use_item_features" => n.use_item_features = parse(v)?,
                "model.use_free_user_embed" => n.use_free_user_embed = parse(v)?,
                "model.use_free_item_embed" => n.use_free_item_embed = parse(v)?,
                "model.fuse_without_features" => n.fuse_without_features = parse(v)?,
                "model.use_batchnorm" => n.use_batchnorm = parse(v)?,
                "model.empty_neighbor_policy" => n.empty_neighbor_policy = parse::<EmptyNeighborPolicy>(v)?,
                "train.learning_rate" => self.train.learning_rate = parse(v)?,
                "train.batch_size" => self.train.batch_size = parse(v)?,
                "train.neg_samples_per_pos" => self.train.neg_samples_per_pos = parse(v)?,
                "train.lambda" => self.train.lambda = parse(v)?,
                "train.max_epochs" => self.train.max_epochs = parse(v)?,
                "train.early_stop_patience" => self.train.early_stop_patience = parse(v)?,
                "train.validation_negatives" => self.train.validation_negatives = parse(v)?,
                "train.resample_negatives" => self.train.resample_negatives = parse(v)?,
                "eval.top_n" => self.eval.top_n = parse_list(v)?,
                "eval.num_sampled_negatives" => self.eval.num_sampled_negatives = parse(v)?,
                "eval.num_repetitions" => self.eval.num_repetitions = parse(v)?,
                "eval.buckets" => self.eval.bucket_boundaries = parse_list(v)?,
                "ablate.depths" => self.ablate_depths = parse_list(v)?,
                "ablate.variants" => self.ablate_variants = parse_list(v)?,
                _ => unreachable!("key list and setter disagree on `{key}`"),
            }
            Ok(())
        })();
        r.map_err(|message| ConfigError::Field {
            key: key.to_string(),
            message,
        })
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            cfg.set(key.trim(), value).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { key, line: Some(idx + 1) },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies `--key value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), ConfigError> {
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let Some(key) = flag.strip_prefix("--") else {
                return Err(ConfigError::Field {
                    key: flag.clone(),
                    message: "expected an override of the form `--key value`".into(),
                });
            };
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k, v.to_string()),
                None => {
                    let value = it.next().ok_or_else(|| ConfigError::Field {
                        key: key.to_string(),
                        message: "missing value".into(),
                    })?;
                    (key, value.clone())
                }
            };
            self.set(key, &value)?;
        }
        Ok(())
    }

    /// One `key = value` line per key, in [`KEYS`] order.
    pub fn canonical(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("every key renders")))
            .collect()
    }

    /// Hex SHA-256 of the canonical text.
    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |key: &str, message: String| ConfigError::Field {
            key: key.to_string(),
            message,
        };
        self.split.validate().map_err(|e| field("split", e.to_string()))?;
        if self.data == DataSource::Synthetic {
            self.synth.validate().map_err(|e| field("synth", e.to_string()))?;
        } else {
            if self.ratings.is_none() {
                return Err(field("ratings", "required when data = files".into()));
            }
            if self.trust.is_none() {
                return Err(field("trust", "required when data = files".into()));
            }
        }
        self.net.validate().map_err(|e| field("model", e.to_string()))?;
        self.train.validate().map_err(|e| field("train", e.to_string()))?;
        self.eval.validate().map_err(|e| field("eval", e.to_string()))?;
        if self.ablate_variants.is_empty() || self.ablate_depths.is_empty() {
            return Err(field("ablate", "the ablation grid is empty".into()));
        }
        Ok(())
    }

    /// The sub-configs with their seeds derived from the global seed.
    pub fn resolved(&self) -> Resolved {
        let mut split = self.split;
        split.rng_seed = seeds::derive_seed(self.seed, streams::SPLIT, 0);
        let mut synth = self.synth.clone();
        synth.rng_seed = seeds::derive_seed(self.seed, streams::SYNTH, 0);
        let mut train = self.train.clone();
        train.rng_seed = seeds::derive_seed(self.seed, streams::SAMPLING, 0);
        let mut eval = self.eval.clone();
        eval.rng_seed = seeds::derive_seed(self.seed, streams::EVAL, 0);
        Resolved {
            split,
            synth,
            train,
            eval,
            init_seed: seeds::derive_seed(self.seed, streams::INIT, 0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Resolved {
    pub split: SplitSpec,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub init_seed: u64,
}
