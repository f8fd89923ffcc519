//! The three-stage replay pipeline: keyword filter → relevance classifier
//! → entity tagger, emitting one JSON alert record per surviving tweet.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError, LoadedModel};
use crate::classifier::{ClassifierError, ClassifierModel};
use crate::ner::{Label, NerError, NerModel};
use crate::textprep::{normalize, KeywordSet, TextPrepError, TweetCsvReader, Vocabulary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(
        "classifier and tagger use different preprocessing (vocabulary {classifier} vs {ner})"
    )]
    VocabularyMismatch { classifier: String, ner: String },
    #[error("{path}: expected a {expected} checkpoint")]
    WrongModelKind { path: String, expected: &'static str },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("{line}: bad alert record: {message}")]
    BadAlert { line: u64, message: String },
    #[error(transparent)]
    Text(#[from] TextPrepError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Ner(#[from] NerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One extracted entity: its text, label, and `[start, end)` token span
/// within the normalized tweet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertEntity {
    pub text: String,
    pub label: Label,
    pub start: usize,
    pub end: usize,
}

/// The pipeline's terminal output: extracted entities plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub tweet_id: String,
    pub account: String,
    pub posted_at: DateTime<Utc>,
    pub infrastructure: String,
    pub matched_keywords: Vec<String>,
    pub relevance: f64,
    pub entities: Vec<AlertEntity>,
    pub classifier_version: String,
    pub ner_version: String,
    pub emitted_at: DateTime<Utc>,
}

impl AlertRecord {
    /// Structural invariants every emitted (and re-read) record satisfies.
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.relevance) {
            return Err(format!("relevance {} outside [0,1]", self.relevance));
        }
        for e in &self.entities {
            if e.label == Label::O {
                return Err("entity labeled O".to_owned());
            }
            if e.start >= e.end {
                return Err(format!("empty span [{}, {})", e.start, e.end));
            }
            if e.text.is_empty() {
                return Err("entity with empty text".to_owned());
            }
        }
        Ok(())
    }
}

/// Pipeline configuration, read from JSON. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub keyword_file: PathBuf,
    pub classifier_checkpoint: PathBuf,
    pub ner_checkpoint: PathBuf,
    /// Tweet CSV to replay.
    pub input: PathBuf,
    /// JSON-lines alert sink.
    pub output: PathBuf,
    /// Defaults to the keyword file stem.
    #[serde(default)]
    pub infrastructure_name: Option<String>,
    /// Relevance threshold; defaults to 0.5, boundary inclusive.
    #[serde(default)]
    pub threshold_override: Option<f64>,
    /// Fixed `emitted_at` stamp for all records of the run. Replays that
    /// must be byte-identical set this; otherwise the wall clock at run
    /// start is used.
    #[serde(default)]
    pub emitted_at: Option<DateTime<Utc>>,
}

impl PipelineConfig {
    pub fn from_json_str(json: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(json).map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let contents = fs::read_to_string(path)?;
        Self::from_json_str(&contents)
    }
}

/// Per-run counters. Every ingested row lands in exactly one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RunSummary {
    pub ingested: usize,
    pub filtered_out: usize,
    pub classified_irrelevant: usize,
    pub alerts: usize,
    pub malformed: usize,
}

impl RunSummary {
    pub fn conserved(&self) -> bool {
        self.ingested
            == self.filtered_out + self.classified_irrelevant + self.alerts + self.malformed
    }
}

/// The loaded stages, reusable across inputs.
pub struct Pipeline {
    pub keywords: KeywordSet,
    pub classifier: ClassifierModel,
    pub ner: NerModel,
    pub vocab: Vocabulary,
    pub threshold: f64,
    pub classifier_version: String,
    pub ner_version: String,
    pub infrastructure: String,
}

impl Pipeline {
    /// Load and cross-check both checkpoints and the keyword file. Fails
    /// when the two models were trained over different vocabularies.
    pub fn load(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let mut keywords = KeywordSet::from_file(&cfg.keyword_file)?;
        if let Some(name) = &cfg.infrastructure_name {
            keywords.infrastructure_name = name.clone();
        }
        let clf = checkpoint::load(&cfg.classifier_checkpoint)?;
        let ner = checkpoint::load(&cfg.ner_checkpoint)?;
        let classifier = match clf.model {
            LoadedModel::Classifier(m) => m,
            LoadedModel::Ner(_) => {
                return Err(PipelineError::WrongModelKind {
                    path: cfg.classifier_checkpoint.display().to_string(),
                    expected: "classifier",
                })
            }
        };
        let tagger = match ner.model {
            LoadedModel::Ner(m) => m,
            LoadedModel::Classifier(_) => {
                return Err(PipelineError::WrongModelKind {
                    path: cfg.ner_checkpoint.display().to_string(),
                    expected: "ner",
                })
            }
        };
        if clf.vocab_hash != ner.vocab_hash {
            return Err(PipelineError::VocabularyMismatch {
                classifier: clf.vocab_hash,
                ner: ner.vocab_hash,
            });
        }
        let threshold = cfg.threshold_override.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&threshold) {
            return Err(PipelineError::InvalidConfig(format!(
                "threshold {threshold} outside [0,1]"
            )));
        }
        let infrastructure = keywords.infrastructure_name.clone();
        Ok(Self {
            keywords,
            classifier,
            ner: tagger,
            vocab: clf.vocab,
            threshold,
            classifier_version: clf.digest,
            ner_version: ner.digest,
            infrastructure,
        })
    }

}

/// Append one record to the sink as a single JSON line.
pub fn emit_alert(record: &AlertRecord, sink: &mut impl Write) -> Result<(), PipelineError> {
    debug_assert!(record.validate().is_ok());
    let line = serde_json::to_string(record)
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    sink.write_all(line.as_bytes())?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Parse one alert line, enforcing the record invariants.
pub fn parse_alert_line(line: &str, line_no: u64) -> Result<AlertRecord, PipelineError> {
    let record: AlertRecord =
        serde_json::from_str(line).map_err(|e| PipelineError::BadAlert {
            line: line_no,
            message: e.to_string(),
        })?;
    record.validate().map_err(|message| PipelineError::BadAlert {
        line: line_no,
        message,
    })?;
    Ok(record)
}

/// Read an alert file back.
pub fn read_alerts(path: &Path) -> Result<Vec<AlertRecord>, PipelineError> {
    let contents = fs::read_to_string(path)?;
    contents
        .lines()
        .enumerate()
        .map(|(i, line)| parse_alert_line(line, i as u64 + 1))
        .collect()
}

/// Replay the configured input file through the pipeline, appending alerts
/// to the output sink in input order. Malformed rows (unparseable CSV or
/// text that normalizes to nothing) are logged, counted, and skipped; an
/// unreadable input or sink is fatal.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let pipeline = Pipeline::load(cfg)?;
    let emitted_at = cfg.emitted_at.unwrap_or_else(Utc::now);
    let input = fs::File::open(&cfg.input)?;
    let mut sink = BufWriter::new(fs::File::create(&cfg.output)?);
    let mut summary = RunSummary::default();

    for row in TweetCsvReader::new(input) {
        summary.ingested += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping malformed row: {e}");
                summary.malformed += 1;
                continue;
            }
        };
        let tokens = match normalize(&row.tweet.text) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("skipping tweet {}: {e}", row.tweet.id);
                summary.malformed += 1;
                continue;
            }
        };
        if !pipeline.keywords.matches(&tokens) {
            summary.filtered_out += 1;
            continue;
        }
        let enc = pipeline
            .vocab
            .encode(&tokens, pipeline.classifier.config.max_len);
        let relevance = pipeline.classifier.predict_proba(&enc)?;
        if relevance < pipeline.threshold {
            summary.classified_irrelevant += 1;
            continue;
        }
        let tagged = pipeline.ner.tag_tokens(&tokens, &pipeline.vocab)?;
        let entities: Vec<AlertEntity> = tagged
            .spans
            .iter()
            .map(|s| AlertEntity {
                text: tagged.tokens[s.start..s.end].join(" "),
                label: s.label,
                start: s.start,
                end: s.end,
            })
            .collect();
        let record = AlertRecord {
            tweet_id: row.tweet.id.clone(),
            account: row.tweet.account.clone(),
            posted_at: row.tweet.posted_at,
            infrastructure: pipeline.infrastructure.clone(),
            matched_keywords: pipeline.keywords.matched(&tokens),
            relevance,
            entities,
            classifier_version: pipeline.classifier_version.clone(),
            ner_version: pipeline.ner_version.clone(),
            emitted_at,
        };
        emit_alert(&record, &mut sink)?;
        summary.alerts += 1;
    }
    sink.flush()?;
    debug_assert!(summary.conserved());
    Ok(summary)
}
