//! The `fwqa` command line.

use std::collections::HashSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use crate::checkpoint;
use crate::dataset::{
    build_dataset, split_dataset, validate_ratios, BuildOptions, NounLexicon, QaInstance, QaRecord,
    DEFAULT_RATIOS,
};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::io;
use crate::metrics::{evaluate, wups, Taxonomy};
use crate::model::{kind_of, ModelConfig, ModelKind};
use crate::pipeline::{
    check_dims, check_model_gradients, env_seed, prepare_examples, RunConfig, DEFAULT_FRAMES,
};
use crate::synth::{generate, SynthConfig};
use crate::train::{predict_all, save_history_csv, train};

#[derive(Debug, Parser)]
#[command(
    name = "fwqa",
    version,
    about = "Multiple-choice video question answering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn question/answer records into eight-way multiple-choice instances.
    BuildDataset {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for instances.jsonl, discards.jsonl and entities.tsv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 5)]
        min_noun_count: usize,
        /// One noun per line; replaces the built-in noun heuristic.
        #[arg(long)]
        noun_lexicon: Option<PathBuf>,
        /// Words never used as entities, one per line.
        #[arg(long)]
        blocklist: Option<PathBuf>,
    },
    /// Split instances into train/val/test by video.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "0.801,0.086,0.113")]
        ratios: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for train.jsonl, val.jsonl and test.jsonl; defaults to
        /// the input's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic task: features, instances and embeddings.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write its best checkpoint.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint: accuracy, per-type accuracy and WUPS.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// `child<TAB>parent` noun hierarchy; the bundled demo one by default.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Training config, for the number of sampled frames.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        /// A model name, `ops` for the primitives, or `all`.
        #[arg(long, default_value = "all")]
        model: String,
        #[arg(long, default_value = "toy")]
        dims: String,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 5)]
        tokens: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score answer files (one answer per line) with WUPS.
    Wups {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truths: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Thresholds to report.
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.9")]
        theta: Vec<f64>,
    },
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::Unclassified(_) => 2,
        Error::Io { .. } | Error::Format { .. } | Error::Json(_) => 3,
        Error::Shape { .. } | Error::Invariant(_) | Error::NonFiniteLoss { .. } => 4,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn seed_or(flag: Option<u64>, fallback: u64) -> u64 {
    flag.or_else(env_seed).unwrap_or(fallback)
}

fn read_word_list(path: &Path) -> Result<HashSet<String>> {
    Ok(io::read_to_string(path)?
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn parse_ratios(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::arg(format!("ratios {text:?}: {e}")))?;
    let ratios: [f64; 3] = parts
        .try_into()
        .map_err(|_| Error::arg(format!("ratios {text:?} must have three values")))?;
    validate_ratios(&ratios)?;
    Ok(ratios)
}

fn load_taxonomy(path: Option<&Path>) -> Result<Taxonomy> {
    match path {
        Some(p) => Taxonomy::load(p),
        None => Ok(Taxonomy::demo()),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::BuildDataset {
            input,
            out,
            seed,
            min_noun_count,
            noun_lexicon,
            blocklist,
        } => {
            let records: Vec<QaRecord> = io::read_jsonl(&input)?;
            let opts = BuildOptions {
                min_noun_count,
                blocklist: blocklist
                    .as_deref()
                    .map(read_word_list)
                    .transpose()?
                    .unwrap_or_default(),
                lexicon: noun_lexicon
                    .as_deref()
                    .map(|p| io::read_to_string(p).map(|t| NounLexicon::parse(&t)))
                    .transpose()?,
                seed: seed_or(seed, 0),
            };
            let built = build_dataset(&records, &opts)?;
            io::write_jsonl(&out.join("instances.jsonl"), &built.instances)?;
            io::write_jsonl(&out.join("discards.jsonl"), &built.discards)?;
            let entities: String = built
                .entities
                .entries
                .iter()
                .map(|(w, c)| format!("{w}\t{c}\n"))
                .collect();
            io::write_atomic(&out.join("entities.tsv"), entities.as_bytes())?;
            info!(
                "{} records: {} instances, {} discarded, {} entities",
                records.len(),
                built.instances.len(),
                built.discards.len(),
                built.entities.len()
            );
            Ok(())
        }
        Command::Split {
            input,
            ratios,
            seed,
            out,
        } => {
            let ratios = parse_ratios(&ratios)?;
            let instances: Vec<QaInstance> = io::read_jsonl(&input)?;
            let parts = split_dataset(&instances, ratios, seed_or(seed, 0))?;
            let dir =
                out.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            for (name, part) in ["train", "val", "test"].iter().zip(&parts) {
                io::write_jsonl(&dir.join(format!("{name}.jsonl")), part)?;
                info!("{name}: {} instances", part.len());
            }
            if ratios != DEFAULT_RATIOS {
                info!("custom ratios {ratios:?}");
            }
            Ok(())
        }
        Command::Synth { config, out, seed } => {
            let mut cfg: SynthConfig = match config {
                Some(p) => serde_json::from_str(&io::read_to_string(&p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => SynthConfig::default(),
            };
            cfg.seed = seed_or(seed, cfg.seed);
            let data = generate(&cfg)?;
            data.write(&out)?;
            info!(
                "wrote {} synthetic videos to {}",
                data.instances.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            model,
            config,
            train: train_path,
            val,
            features,
            embeddings,
            out,
            seed,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::from_json("{}")?,
            };
            cfg.train.seed = seed_or(seed, cfg.train.seed);
            let table = EmbeddingTable::load(&embeddings)?;
            let mut store = FeatureStore::new(features);
            let train_set = prepare_examples(
                &io::read_jsonl(&train_path)?,
                &mut store,
                &table,
                cfg.frames,
            )?;
            let val_set = prepare_examples(&io::read_jsonl(&val)?, &mut store, &table, cfg.frames)?;
            check_dims(&train_set, &cfg.train.model)?;
            check_dims(&val_set, &cfg.train.model)?;
            let outcome = train(model, &train_set, &val_set, &cfg.train)?;
            checkpoint::save(&outcome.params, &out)?;
            let mut history = out.clone().into_os_string();
            history.push(".history.csv");
            save_history_csv(&outcome.history, Path::new(&history))?;
            info!(
                "{model}: best validation accuracy {:.4} at epoch {}",
                outcome.best_val_accuracy, outcome.best_epoch
            );
            Ok(())
        }
        Command::Eval {
            checkpoint: ckpt,
            test,
            features,
            embeddings,
            taxonomy,
            report,
            config,
            frames,
        } => {
            let params = checkpoint::load(&ckpt)?;
            let kind = kind_of(&params)?;
            let model = ModelConfig::infer(&params)?;
            let frames = match (frames, config) {
                (Some(n), _) => n,
                (None, Some(p)) => RunConfig::load(&p)?.frames,
                (None, None) => DEFAULT_FRAMES,
            };
            let tax = load_taxonomy(taxonomy.as_deref())?;
            let table = EmbeddingTable::load(&embeddings)?;
            let instances: Vec<QaInstance> = io::read_jsonl(&test)?;
            let examples =
                prepare_examples(&instances, &mut FeatureStore::new(features), &table, frames)?;
            check_dims(&examples, &model)?;
            let predicted: Vec<usize> = predict_all(kind, &params, &examples)?
                .into_iter()
                .map(|a| a.predicted)
                .collect();
            let rep = evaluate(&predicted, &instances, &tax)?;
            io::write_atomic(&report, serde_json::to_string_pretty(&rep)?.as_bytes())?;
            print!("{}", rep.table());
            Ok(())
        }
        Command::Gradcheck {
            model,
            dims,
            tol,
            step,
            frames,
            tokens,
            seed,
        } => {
            let cfg = match dims.as_str() {
                "toy" => ModelConfig::toy(),
                other => {
                    return Err(Error::arg(format!(
                        "unknown dims {other:?}; only \"toy\" is available"
                    )))
                }
            };
            if !(tol > 0.0 && step > 0.0) {
                return Err(Error::arg(format!(
                    "tolerance {tol} and step {step} must be positive"
                )));
            }
            let seed = seed_or(seed, 0);
            let (ops, kinds): (bool, Vec<ModelKind>) = match model.as_str() {
                "all" => (true, ModelKind::ALL.to_vec()),
                "ops" => (true, Vec::new()),
                m => (false, vec![m.parse()?]),
            };
            let mut failed = Vec::new();
            if ops {
                for (name, r) in crate::gradcheck::check_primitives(seed, step, tol) {
                    println!(
                        "op {name:<16} max relative error {:.3e}",
                        r.max_relative_error
                    );
                    if !r.pass {
                        failed.push(name.to_string());
                    }
                }
            }
            for kind in kinds {
                let r = check_model_gradients(kind, &cfg, frames, tokens, seed, step, tol)?;
                println!(
                    "model {:<16} max relative error {:.3e} over {} parameters",
                    kind.as_str(),
                    r.max_relative_error,
                    r.checked
                );
                if !r.pass {
                    failed.push(kind.to_string());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::Invariant(format!(
                    "gradient check above tolerance {tol} for {}",
                    failed.join(", ")
                )))
            }
        }
        Command::Wups {
            predictions,
            truths,
            taxonomy,
            theta,
        } => {
            let tax = load_taxonomy(taxonomy.as_deref())?;
            let lines = |p: &Path| -> Result<Vec<String>> {
                Ok(io::read_to_string(p)?.lines().map(str::to_string).collect())
            };
            let (p, t) = (lines(&predictions)?, lines(&truths)?);
            if theta.is_empty() {
                warn!("no thresholds requested");
            }
            for th in theta {
                println!("WUPS@{th}: {:.4}", wups(&p, &t, th, &tax)?);
            }
            Ok(())
        }
    }
}
