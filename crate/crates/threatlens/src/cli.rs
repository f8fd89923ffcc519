//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error. The
//! `THREATLENS_SEED` environment variable overrides `--seed`.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::{self, LoadedModel};
use crate::classifier::{ClassifierConfig, EmbeddingInit};
use crate::ner::NerConfig;
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::textprep::{build_vocabulary, normalize, KeywordSet, TweetCsvReader, Vocabulary};
use crate::trainer::{
    evaluate_classifier, evaluate_ner, grid_search, load_classification_split, load_ner_split,
    load_word_vectors, train_classifier, train_ner, ClassifierGrid, Dataset, EarlyStopPolicy,
    GridSpec, NerGrid, Role, TrainerError, WordVectors,
};

pub const SEED_ENV: &str = "THREATLENS_SEED";
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "threatlens",
    version,
    about = "Tweet-stream cyberthreat triage: keyword filter, relevance classifier, entity tagger"
)]
struct Cli {
    /// Base RNG seed; the THREATLENS_SEED environment variable overrides
    /// this flag.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Classifier,
    Ner,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a tweet CSV, optionally keyword-filter it, and emit one
    /// JSON object of tokens per surviving tweet.
    Preprocess {
        /// Tweet CSV (id,account,posted_at,account_set,text[,label]).
        #[arg(long)]
        input: PathBuf,
        /// Keyword file; when given, non-matching tweets are dropped.
        #[arg(long)]
        keywords: Option<PathBuf>,
        /// Output path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the vocabulary built from the surviving tweets.
        #[arg(long)]
        emit_vocab: Option<PathBuf>,
        /// Minimum token frequency for the emitted vocabulary.
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Train the relevance classifier and write a checkpoint.
    TrainClassifier {
        /// Classifier configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Labeled training CSV.
        #[arg(long)]
        train: PathBuf,
        /// Labeled validation CSV (early stopping).
        #[arg(long)]
        val: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Pretrained word vectors (text format), for pretrained configs.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Shared vocabulary JSON (default: built from the training split).
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        max_epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 10)]
        patience: usize,
    },
    /// Train the entity tagger and write a checkpoint.
    TrainNer {
        /// Tagger configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Gold-tagged training file (token<TAB>label, blank-line separated).
        #[arg(long)]
        train: PathBuf,
        /// Gold-tagged validation file.
        #[arg(long)]
        val: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        max_epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 10)]
        patience: usize,
    },
    /// Exhaustive grid search with k-fold cross-validation; writes a
    /// JSON-lines report ranked by the task's selection rule.
    GridSearch {
        #[arg(long, value_enum)]
        task: Task,
        /// Training data (CSV for classifier, CoNLL for ner).
        #[arg(long)]
        data: PathBuf,
        /// Report output path (JSON lines).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Pretrained vectors; switches the grid to its pretrained variant.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        max_epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 10)]
        patience: usize,
    },
    /// Evaluate a checkpoint on a labeled dataset and print metrics JSON.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// CSV for classifier checkpoints, CoNLL for tagger checkpoints.
        #[arg(long)]
        data: PathBuf,
        /// Output path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a tweet CSV through the full pipeline, appending alerts.
    Run {
        /// Pipeline configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured alert output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fixed RFC 3339 emitted_at stamp for byte-identical replays.
        #[arg(long)]
        emitted_at: Option<String>,
    },
    /// Tag one tweet read from stdin; prints token<TAB>label lines.
    Tag {
        /// Tagger checkpoint.
        #[arg(long)]
        model: PathBuf,
    },
}

/// Parse `argv` and execute. Returns the process exit code.
pub fn run(argv: &[OsString]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let seed = match resolve_seed(cli.seed) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    match execute(cli.command, seed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, String> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .parse::<u64>()
            .map_err(|_| format!("{SEED_ENV} must be an unsigned integer, got {raw:?}")),
        Err(std::env::VarError::NotPresent) => Ok(flag.unwrap_or(DEFAULT_SEED)),
        Err(e) => Err(format!("cannot read {SEED_ENV}: {e}")),
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Text(#[from] crate::textprep::TextPrepError),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error(transparent)]
    Ner(#[from] crate::ner::NerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Message(String),
}

fn load_vectors(path: &Option<PathBuf>) -> Result<Option<WordVectors>, CliError> {
    Ok(match path {
        Some(p) => Some(load_word_vectors(p)?),
        None => None,
    })
}

fn load_vocab(path: &Option<PathBuf>) -> Result<Option<Vocabulary>, CliError> {
    Ok(match path {
        Some(p) => Some(Vocabulary::load_json(p)?),
        None => None,
    })
}

fn policy(max_epochs: usize, batch_size: usize, patience: usize) -> EarlyStopPolicy {
    EarlyStopPolicy {
        max_epochs,
        batch_size,
        patience,
    }
}

fn write_or_print(out: &Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, contents)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
        }
    }
    Ok(())
}

fn execute(command: Command, seed: u64) -> Result<(), CliError> {
    match command {
        Command::Preprocess {
            input,
            keywords,
            out,
            emit_vocab,
            min_count,
        } => preprocess(input, keywords, out, emit_vocab, min_count),
        Command::TrainClassifier {
            config,
            train,
            val,
            out,
            embeddings,
            vocab,
            max_epochs,
            batch_size,
            patience,
        } => {
            let cfg = ClassifierConfig::from_json(&fs::read_to_string(&config)?)?;
            let train_split = load_classification_split(&train, Role::Train)?;
            let val_split = load_classification_split(&val, Role::Validation)?;
            let vectors = load_vectors(&embeddings)?;
            let outcome = train_classifier(
                &cfg,
                &train_split,
                &val_split,
                &policy(max_epochs, batch_size, patience),
                seed,
                vectors.as_ref(),
                load_vocab(&vocab)?,
            )?;
            checkpoint::save_classifier(&out, &outcome.model, &outcome.vocab)?;
            eprintln!(
                "trained {} epochs (best {}), val tpr {:.3} tnr {:.3}; wrote {}",
                outcome.history.epochs.len(),
                outcome.history.best_epoch,
                outcome.val_metrics.tpr,
                outcome.val_metrics.tnr,
                out.display()
            );
            Ok(())
        }
        Command::TrainNer {
            config,
            train,
            val,
            out,
            embeddings,
            vocab,
            max_epochs,
            batch_size,
            patience,
        } => {
            let cfg = NerConfig::from_json(&fs::read_to_string(&config)?)?;
            let train_split = load_ner_split(&train, Role::Train)?;
            let val_split = load_ner_split(&val, Role::Validation)?;
            let vectors = load_vectors(&embeddings)?;
            let outcome = train_ner(
                &cfg,
                &train_split,
                &val_split,
                &policy(max_epochs, batch_size, patience),
                seed,
                vectors.as_ref(),
                load_vocab(&vocab)?,
            )?;
            checkpoint::save_ner(&out, &outcome.model, &outcome.vocab)?;
            eprintln!(
                "trained {} epochs (best {}), val micro-F1 {:.3}; wrote {}",
                outcome.history.epochs.len(),
                outcome.history.best_epoch,
                outcome.val_metrics.micro_f1,
                out.display()
            );
            Ok(())
        }
        Command::GridSearch {
            task,
            data,
            out,
            folds,
            embeddings,
            max_epochs,
            batch_size,
            patience,
        } => {
            let vectors = load_vectors(&embeddings)?;
            let init = if vectors.is_some() {
                EmbeddingInit::Pretrained
            } else {
                EmbeddingInit::Random
            };
            let (spec, dataset) = match task {
                Task::Classifier => (
                    GridSpec::Classifier(ClassifierGrid::paper(init)),
                    Dataset::Classification(load_classification_split(&data, Role::Train)?),
                ),
                Task::Ner => (
                    GridSpec::Ner(NerGrid::paper(init)),
                    Dataset::Ner(load_ner_split(&data, Role::Train)?),
                ),
            };
            eprintln!("grid search over {} configurations", spec.len());
            let report = grid_search(
                &spec,
                &dataset,
                folds,
                &policy(max_epochs, batch_size, patience),
                seed,
                vectors.as_ref(),
            )?;
            report.write_jsonl(&out)?;
            if let Some(best) = report.best_index() {
                eprintln!(
                    "best configuration: index {best} ({})",
                    report.entries[best].config
                );
            }
            Ok(())
        }
        Command::Evaluate { model, data, out } => {
            let ckpt = checkpoint::load(&model)?;
            let report = match ckpt.model {
                LoadedModel::Classifier(m) => {
                    let split = load_classification_split(&data, Role::Test)?;
                    let metrics = evaluate_classifier(&m, &ckpt.vocab, &split)?;
                    serde_json::json!({
                        "model": "classifier",
                        "model_version": ckpt.digest,
                        "dataset": split.name,
                        "examples": split.len(),
                        "metrics": metrics,
                        "distance_to_ideal": metrics.distance_to_ideal(),
                    })
                }
                LoadedModel::Ner(m) => {
                    let split = load_ner_split(&data, Role::Test)?;
                    let metrics = evaluate_ner(&m, &ckpt.vocab, &split)?;
                    serde_json::json!({
                        "model": "ner",
                        "model_version": ckpt.digest,
                        "dataset": split.name,
                        "sentences": split.len(),
                        "metrics": metrics,
                    })
                }
            };
            write_or_print(&out, &format!("{}\n", serde_json::to_string_pretty(&report)?))
                .map_err(|e| CliError::Message(e.to_string()))?;
            Ok(())
        }
        Command::Run {
            config,
            out,
            emitted_at,
        } => {
            let mut cfg = PipelineConfig::from_json_file(&config)?;
            if let Some(path) = out {
                cfg.output = path;
            }
            if let Some(raw) = emitted_at {
                let stamp: DateTime<Utc> = raw
                    .parse()
                    .map_err(|e| CliError::Message(format!("bad --emitted-at {raw:?}: {e}")))?;
                cfg.emitted_at = Some(stamp);
            }
            let summary = run_pipeline(&cfg)?;
            eprintln!(
                "ingested {} | filtered out {} | classified irrelevant {} | alerts {} | malformed {}",
                summary.ingested,
                summary.filtered_out,
                summary.classified_irrelevant,
                summary.alerts,
                summary.malformed
            );
            Ok(())
        }
        Command::Tag { model } => {
            let ckpt = checkpoint::load(&model)?;
            let tagger = match ckpt.model {
                LoadedModel::Ner(m) => m,
                LoadedModel::Classifier(_) => {
                    return Err(CliError::Message(format!(
                        "{} is a classifier checkpoint; tag needs a tagger",
                        model.display()
                    )))
                }
            };
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            let tokens = normalize(&text)?;
            let tagged = tagger.tag_tokens(&tokens, &ckpt.vocab)?;
            let mut stdout = std::io::stdout().lock();
            for (token, label) in tagged.tokens.iter().zip(&tagged.labels) {
                writeln!(stdout, "{token}\t{}", label.as_str())?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PreprocessedTweet<'a> {
    id: &'a str,
    account: &'a str,
    posted_at: DateTime<Utc>,
    account_set: &'a crate::textprep::AccountSet,
    tokens: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    matched_keywords: Vec<String>,
}

fn preprocess(
    input: PathBuf,
    keywords: Option<PathBuf>,
    out: Option<PathBuf>,
    emit_vocab: Option<PathBuf>,
    min_count: usize,
) -> Result<(), CliError> {
    let keyword_set = match &keywords {
        Some(p) => Some(KeywordSet::from_file(p)?),
        None => None,
    };
    let file = fs::File::open(&input)?;
    let mut kept: Vec<(crate::textprep::TweetRow, Vec<String>)> = Vec::new();
    let (mut total, mut malformed, mut filtered) = (0usize, 0usize, 0usize);
    for row in TweetCsvReader::new(file) {
        total += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping malformed row: {e}");
                malformed += 1;
                continue;
            }
        };
        let tokens = match normalize(&row.tweet.text) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("skipping tweet {}: {e}", row.tweet.id);
                malformed += 1;
                continue;
            }
        };
        if let Some(ks) = &keyword_set {
            if !ks.matches(&tokens) {
                filtered += 1;
                continue;
            }
        }
        kept.push((row, tokens));
    }

    let mut lines = String::new();
    for (row, tokens) in &kept {
        let matched = keyword_set
            .as_ref()
            .map(|ks| ks.matched(tokens))
            .unwrap_or_default();
        let record = PreprocessedTweet {
            id: &row.tweet.id,
            account: &row.tweet.account,
            posted_at: row.tweet.posted_at,
            account_set: &row.tweet.account_set,
            tokens,
            label: row.label,
            matched_keywords: matched,
        };
        lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
        lines.push('\n');
    }
    write_or_print(&out, &lines)?;

    if let Some(vocab_path) = emit_vocab {
        let vocab = build_vocabulary(kept.iter().map(|(_, t)| t.as_slice()), min_count)?;
        vocab.save_json(&vocab_path)?;
        eprintln!(
            "vocabulary: {} words, {} chars -> {}",
            vocab.word_count(),
            vocab.char_count(),
            vocab_path.display()
        );
    }
    eprintln!(
        "read {total} rows: kept {}, filtered {filtered}, malformed {malformed}",
        kept.len()
    );
    Ok(())
}
