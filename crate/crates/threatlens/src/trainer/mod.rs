//! Training harness: dataset loading, k-fold cross-validation, early
//! stopping, evaluation metrics, model selection, pretrained-vector
//! loading, and grid search.

mod dataset;
mod earlystop;
mod embeddings;
mod grid;
mod kfold;
mod metrics;
mod train;

pub use dataset::{
    load_classification_split, load_dataset, load_ner_split, parse_conll, ClassificationSplit,
    Dataset, DatasetKind, LabeledTweet, NerSentence, NerSplit, Role,
};
pub use earlystop::{
    train_with_early_stop, EarlyStopPolicy, EpochRecord, HasParams, TrainingHistory,
};
pub use embeddings::{load_word_vectors, parse_word_vectors, WordVectors};
pub use grid::{
    grid_search, ClassifierGrid, GridEntry, GridReport, GridSpec, HeightScheme, NerGrid,
};
pub use kfold::{kfold, Fold};
pub use metrics::{
    evaluate_classifier, evaluate_ner, ner_metrics_from_pairs, select_classifier, select_ner,
    ClassMetrics, LabelMetrics, NerMetrics,
};
pub use train::{train_classifier, train_ner, TrainedClassifier, TrainedNer};

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::crf::CrfError;
use crate::ner::NerError;
use crate::tensor::TensorError;
use crate::textprep::TextPrepError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: u64,
        message: String,
    },
    #[error("need at least {need} examples, have {have}")]
    InsufficientData { have: usize, need: usize },
    #[error("dataset has the wrong kind for this task: expected {expected}")]
    WrongKind { expected: &'static str },
    #[error(transparent)]
    Text(#[from] TextPrepError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Ner(#[from] NerError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
