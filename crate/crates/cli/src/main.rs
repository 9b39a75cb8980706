use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diffnet_cli::commands::{self, CliError, TrainPaths};
use diffnet_cli::config::RunConfig;

/// Social recommendation with layer-wise influence diffusion.
///
/// Every command taking a config also accepts trailing `--key value`
/// overrides, e.g. `--train.max_epochs 5`. Set DIFFNET_LOG (error, warn,
/// info, debug) for log output.
#[derive(Parser)]
#[command(name = "diffnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes a checkpoint every epoch and a log line per epoch.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from the existing checkpoint.
        #[arg(long)]
        resume: bool,
        /// Defaults to <output_dir>/model.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to <output_dir>/train.log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Rank the test split with a checkpoint and write a results table.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Train and evaluate every cell of the depth by input-variant grid.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to <output_dir>/ablation.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Print the top unrated items for one user.
    Recommend {
        #[arg(long)]
        checkpoint: PathBuf,
        /// External user id as it appears in the ratings file.
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Write the configured synthetic dataset as ratings, trust and feature files.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Print a checkpoint's header and tensor shapes.
    DumpCheckpoint {
        path: PathBuf,
        /// Include every value.
        #[arg(long)]
        values: bool,
    },
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            resume,
            checkpoint,
            log,
            overrides,
        } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let defaults = TrainPaths::in_dir(&cfg.output_dir);
            let paths = TrainPaths {
                checkpoint: checkpoint.unwrap_or(defaults.checkpoint),
                log: log.unwrap_or(defaults.log),
            };
            let summary = commands::cmd_train(&cfg, &paths, resume)?;
            match summary.best_epoch {
                Some(e) => println!("trained {} epochs, best epoch {e}", summary.epochs_total),
                None => println!("trained {} epochs", summary.epochs_total),
            }
            println!("checkpoint: {}", paths.checkpoint.display());
        }
        Command::Evaluate {
            checkpoint,
            out,
            overrides,
        } => {
            let result = commands::cmd_evaluate(&checkpoint, &out, &overrides)?;
            for &n in &result.top_n {
                println!("HR@{n} {:.6}  NDCG@{n} {:.6}", result.hr(n), result.ndcg(n));
            }
            println!("results: {}", out.display());
        }
        Command::Ablate { config, out, overrides } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let ablation = commands::cmd_ablate(&cfg)?;
            let table = ablation.table(&cfg.digest());
            let out = out.unwrap_or_else(|| cfg.output_dir.join("ablation.tsv"));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            std::fs::write(&out, &table).map_err(|source| CliError::Io {
                path: out.clone(),
                source,
            })?;
            print!("{table}");
        }
        Command::Recommend {
            checkpoint,
            user,
            top_n,
            overrides,
        } => {
            for (rank, (item, score)) in commands::cmd_recommend(&checkpoint, &user, top_n, &overrides)?
                .iter()
                .enumerate()
            {
                println!("{}\t{item}\t{score:.6}", rank + 1);
            }
        }
        Command::Synth { config, out, overrides } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let paths = commands::cmd_synth(&cfg, &out)?;
            println!("ratings: {}", paths.ratings.display());
            println!("trust: {}", paths.trust.display());
            for p in paths.user_features.iter().chain(&paths.item_features) {
                println!("features: {}", p.display());
            }
        }
        Command::DumpCheckpoint { path, values } => {
            print!("{}", commands::cmd_dump_checkpoint(&path, values)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIFFNET_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
