//! Labeled dataset loading: classification CSV and CoNLL-style NER files.

use std::fs;
use std::path::Path;

use super::TrainerError;
use crate::ner::{Label, NerError};
use crate::textprep::{normalize, TextPrepError, Tweet, TweetCsvReader};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Classification,
    Ner,
}

/// A tweet with its relevance label and pre-normalized tokens.
#[derive(Debug, Clone)]
pub struct LabeledTweet {
    pub tweet: Tweet,
    pub tokens: Vec<String>,
    pub relevant: bool,
}

/// A labeled classification split. Counts always match the contents.
#[derive(Debug, Clone)]
pub struct ClassificationSplit {
    pub name: String,
    pub role: Role,
    pub examples: Vec<LabeledTweet>,
    pub positives: usize,
    pub negatives: usize,
}

impl ClassificationSplit {
    pub fn from_examples(name: &str, role: Role, examples: Vec<LabeledTweet>) -> Self {
        let positives = examples.iter().filter(|e| e.relevant).count();
        let negatives = examples.len() - positives;
        Self {
            name: name.to_owned(),
            role,
            examples,
            positives,
            negatives,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// New split over a subset of examples, used by cross-validation.
    pub fn subset(&self, indices: &[usize], name: &str) -> Self {
        let examples = indices.iter().map(|&i| self.examples[i].clone()).collect();
        Self::from_examples(name, self.role, examples)
    }
}

/// One gold-tagged sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct NerSentence {
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
}

/// A gold-tagged split for the tagger.
#[derive(Debug, Clone)]
pub struct NerSplit {
    pub name: String,
    pub role: Role,
    pub sentences: Vec<NerSentence>,
    pub token_count: usize,
    pub entity_token_count: usize,
}

impl NerSplit {
    pub fn from_sentences(name: &str, role: Role, sentences: Vec<NerSentence>) -> Self {
        let token_count = sentences.iter().map(|s| s.tokens.len()).sum();
        let entity_token_count = sentences
            .iter()
            .flat_map(|s| &s.labels)
            .filter(|&&l| l != Label::O)
            .count();
        Self {
            name: name.to_owned(),
            role,
            sentences,
            token_count,
            entity_token_count,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn subset(&self, indices: &[usize], name: &str) -> Self {
        let sentences = indices.iter().map(|&i| self.sentences[i].clone()).collect();
        Self::from_sentences(name, self.role, sentences)
    }
}

#[derive(Debug)]
pub enum Dataset {
    Classification(ClassificationSplit),
    Ner(NerSplit),
}

fn split_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned())
}

/// Load a labeled classification CSV
/// (`id,account,posted_at,account_set,text,label`). Strict: any malformed
/// row fails the load, reported with its line number.
pub fn load_classification_split(
    path: &Path,
    role: Role,
) -> Result<ClassificationSplit, TrainerError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| TrainerError::Format {
        path: display.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let reader = TweetCsvReader::new(file);
    if !reader.has_label() {
        // Either the header is malformed (the iterator will say so) or the
        // label column is missing.
        let mut peek = reader;
        if let Some(Err(e)) = peek.next() {
            return Err(format_err(&display, e));
        }
        return Err(TrainerError::Format {
            path: display,
            line: 1,
            message: "classification data needs a label column".to_owned(),
        });
    }
    let mut examples = Vec::new();
    for row in reader {
        let row = row.map_err(|e| format_err(&display, e))?;
        let tokens = normalize(&row.tweet.text).map_err(|e| TrainerError::Format {
            path: display.clone(),
            line: row.line,
            message: e.to_string(),
        })?;
        examples.push(LabeledTweet {
            tweet: row.tweet,
            tokens,
            relevant: row.label.expect("label column verified present"),
        });
    }
    if examples.is_empty() {
        return Err(TrainerError::Format {
            path: display,
            line: 1,
            message: "no data rows".to_owned(),
        });
    }
    Ok(ClassificationSplit::from_examples(
        &split_name(path),
        role,
        examples,
    ))
}

fn format_err(path: &str, e: TextPrepError) -> TrainerError {
    match e {
        TextPrepError::Format { line, message } => TrainerError::Format {
            path: path.to_owned(),
            line,
            message,
        },
        other => TrainerError::Format {
            path: path.to_owned(),
            line: 0,
            message: other.to_string(),
        },
    }
}

/// Parse CoNLL-style contents: one `token<TAB>label` per line, blank line
/// between sentences, labels from the fixed six-label set.
pub fn parse_conll(path_for_errors: &str, contents: &str) -> Result<Vec<NerSentence>, TrainerError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    for (idx, raw) in contents.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push(NerSentence {
                    tokens: std::mem::take(&mut tokens),
                    labels: std::mem::take(&mut labels),
                });
            }
            continue;
        }
        let (token, label) = line.split_once('\t').ok_or_else(|| TrainerError::Format {
            path: path_for_errors.to_owned(),
            line: line_no,
            message: "expected token<TAB>label".to_owned(),
        })?;
        if token.is_empty() {
            return Err(TrainerError::Format {
                path: path_for_errors.to_owned(),
                line: line_no,
                message: "empty token".to_owned(),
            });
        }
        let label = Label::parse(label.trim()).map_err(|e| match e {
            NerError::UnknownLabel(l) => TrainerError::Format {
                path: path_for_errors.to_owned(),
                line: line_no,
                message: format!("unknown label {l:?}"),
            },
            other => TrainerError::Ner(other),
        })?;
        tokens.push(token.to_owned());
        labels.push(label);
    }
    if !tokens.is_empty() {
        sentences.push(NerSentence { tokens, labels });
    }
    if sentences.is_empty() {
        return Err(TrainerError::Format {
            path: path_for_errors.to_owned(),
            line: 1,
            message: "no sentences".to_owned(),
        });
    }
    Ok(sentences)
}

/// Load a CoNLL-style gold-tagged file.
pub fn load_ner_split(path: &Path, role: Role) -> Result<NerSplit, TrainerError> {
    let display = path.display().to_string();
    let contents = fs::read_to_string(path).map_err(|e| TrainerError::Format {
        path: display.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let sentences = parse_conll(&display, &contents)?;
    Ok(NerSplit::from_sentences(&split_name(path), role, sentences))
}

/// Kind-dispatching loader.
pub fn load_dataset(path: &Path, kind: DatasetKind, role: Role) -> Result<Dataset, TrainerError> {
    match kind {
        DatasetKind::Classification => {
            Ok(Dataset::Classification(load_classification_split(path, role)?))
        }
        DatasetKind::Ner => Ok(Dataset::Ner(load_ner_split(path, role)?)),
    }
}
