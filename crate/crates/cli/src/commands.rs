//! The subcommands, callable without going through argument parsing.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use diffnet_core::baselines::{BprMf, SvdPlusPlus};
use diffnet_core::data::{
    load_dataset, save_dataset, split, synthesize, write_split_manifest, DataError, Dataset, DatasetPaths, Split,
};
use diffnet_core::diffnet::DiffNet;
use diffnet_core::error::ModelError;
use diffnet_core::eval::{evaluate, write_results, EvalConfig, EvalError, RankingResult};
use diffnet_core::numkernel::{AdamConfig, AdamState};
use diffnet_core::scoring::Scorer;
use diffnet_core::training::{EpochLog, TrainData, TrainError, Trainer};
use log::{info, warn};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError, Tensor};
use crate::config::{ConfigError, DataSource, ModelKind, RunConfig, Variant};
use crate::model::{AnyModel, Persist, PersistError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{source}; batch dump written to {}", dump.display())]
    NonFinite {
        dump: PathBuf,
        #[source]
        source: TrainError,
    },
}

impl CliError {
    /// 2 for bad input on the command line or in the config, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// The full dataset named by the config and its split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub full: Dataset,
    pub split: Split,
}

pub fn prepare_data(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let resolved = cfg.resolved();
    let full = match cfg.data {
        DataSource::Synthetic => synthesize(&resolved.synth)?.dataset,
        DataSource::Files => {
            let missing = |key: &str| ConfigError::Field {
                key: key.into(),
                message: "required when data = files".into(),
            };
            load_dataset(
                cfg.ratings.as_deref().ok_or_else(|| missing("ratings"))?,
                cfg.trust.as_deref().ok_or_else(|| missing("trust"))?,
                cfg.user_features.as_deref(),
                cfg.item_features.as_deref(),
            )?
        }
    };
    let split = split(&full, &resolved.split)?;
    Ok(Prepared { full, split })
}

fn train_data(split: &Split) -> TrainData<'_> {
    TrainData {
        train: &split.train,
        validation: (split.validation.num_interactions() > 0).then_some(&split.validation),
    }
}

/// Where `train` writes its outputs.
#[derive(Clone, Debug)]
pub struct TrainPaths {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

impl TrainPaths {
    pub fn in_dir(dir: &Path) -> Self {
        TrainPaths {
            checkpoint: dir.join("model.ckpt"),
            log: dir.join("train.log"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    /// Epochs finished by this invocation.
    pub epochs: Vec<EpochLog>,
    pub epochs_total: usize,
    pub best_epoch: Option<usize>,
}

/// Trains the configured model, writing a checkpoint after every epoch.
/// With `resume`, continues from the checkpoint at `paths.checkpoint`.
pub fn cmd_train(cfg: &RunConfig, paths: &TrainPaths, resume: bool) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let manifest = cfg.output_dir.join("split.tsv");
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    write_split_manifest(&data.split, &manifest)?;
    match cfg.model {
        ModelKind::DiffNet => train_kind::<DiffNet>(cfg, &data.split, paths, resume),
        ModelKind::Bpr => train_kind::<BprMf>(cfg, &data.split, paths, resume),
        ModelKind::SvdPp => train_kind::<SvdPlusPlus>(cfg, &data.split, paths, resume),
    }
}

fn train_kind<M: Persist>(
    cfg: &RunConfig,
    split: &Split,
    paths: &TrainPaths,
    resume: bool,
) -> Result<TrainSummary, CliError> {
    let resolved = cfg.resolved();
    let (users, items) = (split.train.num_users(), split.train.num_items());
    let mut trainer = if resume {
        let ckpt = Checkpoint::load(&paths.checkpoint)?;
        if ckpt.kind != M::KIND {
            return Err(CliError::Usage(format!(
                "checkpoint holds a {} model, config asks for {}",
                ckpt.kind,
                M::KIND
            )));
        }
        if !same_run(&RunConfig::parse(&ckpt.config)?, cfg) {
            return Err(CliError::Usage(
                "resume needs the configuration the checkpoint was written with (only train.max_epochs may change)"
                    .into(),
            ));
        }
        restore_trainer::<M>(cfg, &ckpt, resolved.train.clone(), users, items)?
    } else {
        write_file(&paths.log, "")?;
        Trainer::new(M::build(cfg, &split.train, resolved.init_seed)?, resolved.train.clone())?
    };
    let data = train_data(split);
    trainer.check_data(data)?;

    let mut log = OpenOptions::new()
        .append(true)
        .create(true)
        .open(&paths.log)
        .map_err(io_err(&paths.log))?;
    let mut epochs = Vec::new();
    while !trainer.is_done() {
        let line = match trainer.run_epoch(data) {
            Ok(line) => line,
            Err(e @ TrainError::NonFiniteLoss { .. }) => {
                let dump = PathBuf::from(format!("{}.nan.txt", paths.checkpoint.display()));
                if let TrainError::NonFiniteLoss { dump: text, .. } = &e {
                    write_file(&dump, text)?;
                }
                return Err(CliError::NonFinite { dump, source: e });
            }
            Err(e) => return Err(e.into()),
        };
        info!("epoch {line}");
        writeln!(log, "{line}").map_err(io_err(&paths.log))?;
        save_trainer(cfg, &trainer, users, items).save(&paths.checkpoint)?;
        epochs.push(line);
    }
    if epochs.is_empty() && !paths.checkpoint.exists() {
        save_trainer(cfg, &trainer, users, items).save(&paths.checkpoint)?;
    }
    Ok(TrainSummary {
        epochs,
        epochs_total: trainer.epochs_done(),
        best_epoch: trainer.best().map(|(e, _, _)| e),
    })
}

/// Equal up to `train.max_epochs`, so a finished run can be extended.
fn same_run(saved: &RunConfig, cfg: &RunConfig) -> bool {
    let mut saved = saved.clone();
    saved.train.max_epochs = cfg.train.max_epochs;
    saved == *cfg
}

/// Serializes the best model under `model.` and everything needed to resume.
pub fn save_trainer<M: Persist>(cfg: &RunConfig, trainer: &Trainer<M>, users: usize, items: usize) -> Checkpoint {
    let mut tensors = Vec::new();
    let best = trainer.best();
    best.map_or(trainer.model(), |(_, _, m)| m).write("model.", &mut tensors);
    trainer.model().write("current.", &mut tensors);
    let adam = trainer.adam();
    for (i, name) in trainer.model().trainable_names().iter().enumerate() {
        tensors.push(Tensor::matrix(format!("adam.m.{name}"), &adam.first_moment[i]));
        tensors.push(Tensor::matrix(format!("adam.v.{name}"), &adam.second_moment[i]));
    }
    let state = [
        ("epoch", trainer.epochs_done() as f64),
        ("adam_step", adam.step as f64),
        ("best_epoch", best.map_or(0.0, |(e, _, _)| e as f64)),
        ("best_score", best.map_or(f64::NAN, |(_, s, _)| s)),
        ("stale_epochs", trainer.stale_epochs() as f64),
        ("num_users", users as f64),
        ("num_items", items as f64),
    ];
    for (name, v) in state {
        tensors.push(Tensor::scalar(format!("state.{name}"), v));
    }
    Checkpoint {
        kind: M::KIND,
        config: cfg.canonical(),
        tensors,
    }
}

fn count(ckpt: &Checkpoint, name: &str) -> Result<usize, CheckpointError> {
    let v = ckpt.scalar(name)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(CheckpointError::Corrupt(format!("`{name}` = {v} is not a count")));
    }
    Ok(v as usize)
}

fn restore_trainer<M: Persist>(
    cfg: &RunConfig,
    ckpt: &Checkpoint,
    train: diffnet_core::training::TrainConfig,
    users: usize,
    items: usize,
) -> Result<Trainer<M>, CliError> {
    check_dims(ckpt, users, items)?;
    let current = M::read(cfg, ckpt, "current.", users, items)?;
    let best_epoch = count(ckpt, "state.best_epoch")?;
    let best = if best_epoch > 0 {
        Some((
            best_epoch,
            ckpt.scalar("state.best_score")?,
            M::read(cfg, ckpt, "model.", users, items)?,
        ))
    } else {
        None
    };
    let mut first_moment = Vec::new();
    let mut second_moment = Vec::new();
    for name in current.trainable_names() {
        first_moment.push(ckpt.matrix(&format!("adam.m.{name}"))?);
        second_moment.push(ckpt.matrix(&format!("adam.v.{name}"))?);
    }
    let adam = AdamState {
        config: AdamConfig::with_learning_rate(train.learning_rate),
        first_moment,
        second_moment,
        step: count(ckpt, "state.adam_step")? as u64,
    };
    let epoch = count(ckpt, "state.epoch")?;
    let stale = count(ckpt, "state.stale_epochs")?;
    Ok(Trainer::resume(current, train, adam, epoch, best, stale)?)
}

fn check_dims(ckpt: &Checkpoint, users: usize, items: usize) -> Result<(), CliError> {
    let found = (count(ckpt, "state.num_users")?, count(ckpt, "state.num_items")?);
    if found != (users, items) {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{} users, {} items", found.0, found.1),
            actual: format!("{users} users, {items} items"),
        }
        .into());
    }
    Ok(())
}

/// Loads a checkpoint and the dataset its config names, after overrides.
fn open_checkpoint(path: &Path, overrides: &[String]) -> Result<(Checkpoint, RunConfig, Prepared, AnyModel), CliError> {
    let ckpt = Checkpoint::load(path)?;
    let mut cfg = RunConfig::parse(&ckpt.config)?;
    cfg.apply_overrides(overrides)?;
    if cfg.model != ckpt.kind {
        return Err(CliError::Usage(format!(
            "checkpoint holds a {} model, not {}",
            ckpt.kind, cfg.model
        )));
    }
    cfg.validate()?;
    let data = prepare_data(&cfg)?;
    let (users, items) = (data.full.num_users(), data.full.num_items());
    check_dims(&ckpt, users, items)?;
    let model = AnyModel::read(ckpt.kind, &cfg, &ckpt, "model.", users, items)?;
    Ok((ckpt, cfg, data, model))
}

/// Ranks the test split and formats the results file.
pub fn results_file(
    model_name: &str,
    scorer: &(impl Scorer + ?Sized),
    split: &Split,
    eval: &EvalConfig,
    digest: &str,
) -> Result<(RankingResult, String), CliError> {
    let result = evaluate(scorer, &split.test, &[&split.train, &split.validation], &split.train, eval)?;
    let text = format!("# config_sha256\t{digest}\n{}", write_results(&result.rows(model_name)));
    Ok((result, text))
}

/// Evaluates a checkpoint on its test split and writes the results file.
pub fn cmd_evaluate(checkpoint: &Path, results: &Path, overrides: &[String]) -> Result<RankingResult, CliError> {
    let (ckpt, cfg, data, model) = open_checkpoint(checkpoint, overrides)?;
    let factors = model.factors(&data.split.train)?;
    let (result, text) = results_file(&ckpt.kind.to_string(), &factors, &data.split, &cfg.resolved().eval, &cfg.digest())?;
    write_file(results, &text)?;
    Ok(result)
}

/// One cell of the ablation grid.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub depth: usize,
    pub variant: Variant,
    /// HR and NDCG at the table's cutoff, or the failure message.
    pub outcome: Result<(f64, f64), String>,
}

#[derive(Clone, Debug)]
pub struct Ablation {
    pub top_n: usize,
    /// Depth of the full model every cell is compared with.
    pub reference_depth: usize,
    pub reference: Result<(f64, f64), String>,
    pub rows: Vec<AblationRow>,
}

fn ablation_cell(cfg: &RunConfig, data: &Prepared, depth: usize, variant: Variant) -> Result<(f64, f64), CliError> {
    let mut cell = cfg.clone();
    cell.model = ModelKind::DiffNet;
    cell.set("model.depth", &depth.to_string())?;
    variant.apply(&mut cell.net);
    cell.validate()?;
    let resolved = cell.resolved();
    let mut trainer = Trainer::new(
        DiffNet::new(cell.net.clone(), &data.split.train, resolved.init_seed)?,
        resolved.train.clone(),
    )?;
    trainer.run(train_data(&data.split))?;
    let outcome = trainer.finish();
    let factors = outcome.model.factors(&data.split.train)?;
    let result = evaluate(
        &factors,
        &data.split.test,
        &[&data.split.train, &data.split.validation],
        &data.split.train,
        &resolved.eval,
    )?;
    let n = ablation_cutoff(&resolved.eval);
    Ok((result.hr(n), result.ndcg(n)))
}

/// N = 10 when evaluated, otherwise the first configured cutoff.
fn ablation_cutoff(eval: &EvalConfig) -> usize {
    if eval.top_n.contains(&10) {
        10
    } else {
        eval.top_n[0]
    }
}

/// Trains and evaluates DiffNet once per (depth, variant) cell. Every cell
/// uses the same data, split and seeds; failures are recorded and the grid
/// goes on.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Ablation, CliError> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let reference_depth = cfg.net.diffusion_depth;
    let mut reference = None;
    let mut rows = Vec::new();
    for &depth in &cfg.ablate_depths {
        for &variant in &cfg.ablate_variants {
            info!("ablation cell K={depth} {variant}");
            let outcome = ablation_cell(cfg, &data, depth, variant).map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                warn!("cell K={depth} {variant} failed: {e}");
            }
            if depth == reference_depth && variant == Variant::Full {
                reference = Some(outcome.clone());
            }
            rows.push(AblationRow {
                depth,
                variant,
                outcome,
            });
        }
    }
    let reference = match reference {
        Some(r) => r,
        None => ablation_cell(cfg, &data, reference_depth, Variant::Full).map_err(|e| e.to_string()),
    };
    Ok(Ablation {
        top_n: ablation_cutoff(&cfg.eval),
        reference_depth,
        reference,
        rows,
    })
}

fn relative(value: f64, reference: f64) -> f64 {
    (value - reference) / reference
}

impl Ablation {
    /// Tab-separated table; the change columns are relative to the full
    /// model at the reference depth.
    pub fn table(&self, digest: &str) -> String {
        let n = self.top_n;
        let mut out = format!("# config_sha256\t{digest}\n");
        match &self.reference {
            Ok((hr, ndcg)) => {
                let _ = writeln!(out, "# reference\tK={}\tfull\t{hr:.6}\t{ndcg:.6}", self.reference_depth);
            }
            Err(e) => {
                let _ = writeln!(out, "# reference\tK={}\tfull\tfailed: {e}", self.reference_depth);
            }
        }
        let _ = writeln!(out, "depth\tvariant\tHR@{n}\tNDCG@{n}\tHR_change\tNDCG_change\tstatus");
        for row in &self.rows {
            match (&row.outcome, &self.reference) {
                (Ok((hr, ndcg)), reference) => {
                    let (dh, dn) = match reference {
                        Ok((rh, rn)) => (
                            format!("{:+.6}", relative(*hr, *rh)),
                            format!("{:+.6}", relative(*ndcg, *rn)),
                        ),
                        Err(_) => ("NA".into(), "NA".into()),
                    };
                    let _ = writeln!(out, "{}\t{}\t{hr:.6}\t{ndcg:.6}\t{dh}\t{dn}\tok", row.depth, row.variant);
                }
                (Err(e), _) => {
                    let msg = e.replace(['\t', '\n'], " ");
                    let _ = writeln!(out, "{}\t{}\tNA\tNA\tNA\tNA\tfailed: {msg}", row.depth, row.variant);
                }
            }
        }
        out
    }
}

/// The `top_n` highest-scoring items outside `rated`, best first. Equal
/// scores go to the lower item index.
pub fn recommend_from(scorer: &(impl Scorer + ?Sized), rated: &[usize], user: usize, top_n: usize) -> Vec<(usize, f64)> {
    let mut rated_mask = vec![false; scorer.num_items()];
    for &i in rated {
        rated_mask[i] = true;
    }
    let mut scored: Vec<(usize, f64)> = (0..scorer.num_items())
        .filter(|&i| !rated_mask[i])
        .map(|i| (i, scorer.score(user, i)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_n);
    scored
}

/// Recommendations for one user by external id. Every interaction in the
/// full dataset counts as rated.
pub fn cmd_recommend(
    checkpoint: &Path,
    user: &str,
    top_n: usize,
    overrides: &[String],
) -> Result<Vec<(String, f64)>, CliError> {
    let (_, _, data, model) = open_checkpoint(checkpoint, overrides)?;
    let dense = data
        .full
        .user_ids()
        .dense(user)
        .ok_or_else(|| CliError::Usage(format!("unknown user `{user}`")))?;
    let rated = data.full.items_of(dense);
    if rated.len() == data.full.num_items() {
        warn!("user `{user}` has rated every item; nothing to recommend");
    }
    let factors = model.factors(&data.split.train)?;
    Ok(recommend_from(&factors, rated, dense, top_n)
        .into_iter()
        .map(|(i, s)| (data.full.item_ids().external(i).to_string(), s))
        .collect())
}

/// Writes the configured synthetic dataset to `dir`.
pub fn cmd_synth(cfg: &RunConfig, dir: &Path) -> Result<DatasetPaths, CliError> {
    cfg.validate()?;
    let synthetic = synthesize(&cfg.resolved().synth)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(save_dataset(&synthetic.dataset, dir)?)
}

pub fn cmd_dump_checkpoint(path: &Path, values: bool) -> Result<String, CliError> {
    Ok(Checkpoint::load(path)?.dump(values))
}
