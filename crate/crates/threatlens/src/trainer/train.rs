//! Concrete training drivers for the two models.

use rand::seq::SliceRandom;

use super::dataset::{ClassificationSplit, NerSplit};
use super::earlystop::{train_with_early_stop, EarlyStopPolicy, TrainingHistory};
use super::embeddings::WordVectors;
use super::metrics::{evaluate_classifier, evaluate_ner, ClassMetrics, NerMetrics};
use super::TrainerError;
use crate::classifier::{ClassifierConfig, ClassifierError, ClassifierModel, EmbeddingInit};
use crate::ner::{Label, NerConfig, NerModel};
use crate::textprep::{build_vocabulary, SentenceEncoding, Vocabulary};

#[derive(Debug)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    pub vocab: Vocabulary,
    pub history: TrainingHistory,
    pub val_metrics: ClassMetrics,
}

#[derive(Debug)]
pub struct TrainedNer {
    pub model: NerModel,
    pub vocab: Vocabulary,
    pub history: TrainingHistory,
    pub val_metrics: NerMetrics,
}

fn check_pretrained(
    init: EmbeddingInit,
    dim: usize,
    pretrained: Option<&WordVectors>,
) -> Result<(), TrainerError> {
    match (init, pretrained) {
        (EmbeddingInit::Pretrained, None) => Err(TrainerError::Classifier(
            ClassifierError::InvalidConfig(
                "pretrained initialization needs a vector file".into(),
            ),
        )),
        (EmbeddingInit::Pretrained, Some(wv)) if wv.dim != dim => Err(TrainerError::Classifier(
            ClassifierError::InvalidConfig(format!(
                "vector file has dimension {}, config wants {}",
                wv.dim, dim
            )),
        )),
        (EmbeddingInit::Random, Some(_)) => Err(TrainerError::Classifier(
            ClassifierError::InvalidConfig(
                "random initialization does not take a vector file".into(),
            ),
        )),
        _ => Ok(()),
    }
}

/// Train the classifier with validation-based early stopping. The
/// vocabulary is built from the training split unless one is supplied.
pub fn train_classifier(
    config: &ClassifierConfig,
    train: &ClassificationSplit,
    val: &ClassificationSplit,
    policy: &EarlyStopPolicy,
    seed: u64,
    pretrained: Option<&WordVectors>,
    vocab_override: Option<Vocabulary>,
) -> Result<TrainedClassifier, TrainerError> {
    // Kernel list order carries no meaning. Value-set validation happens
    // at the configuration-file boundary, so experimental dimensions can
    // be trained through the same driver.
    let mut config = config.clone();
    config.kernel_heights.sort_unstable();
    check_pretrained(config.embedding_init, config.embedding_dim, pretrained)?;
    assert!(!train.is_empty() && !val.is_empty(), "empty split");
    let vocab = match vocab_override {
        Some(v) => v,
        None => build_vocabulary(train.examples.iter().map(|e| e.tokens.as_slice()), 1)?,
    };
    let encoded: Vec<(SentenceEncoding, bool)> = train
        .examples
        .iter()
        .map(|e| (vocab.encode(&e.tokens, config.max_len), e.relevant))
        .collect();

    let mut adam = crate::tensor::AdamState::new();
    let batch_size = policy.batch_size;
    let vocab_for_factory = vocab.clone();
    let config_for_factory = config.clone();
    let (model, history) = train_with_early_stop(
        policy,
        seed,
        move |seed| {
            let mut model = ClassifierModel::with_dims(
                config_for_factory.clone(),
                vocab_for_factory.word_count(),
                seed,
            );
            if let Some(wv) = pretrained {
                model.set_embedding_table(wv.build_table(&vocab_for_factory, seed));
            }
            Ok(model)
        },
        move |model, _epoch, rng| {
            let mut order: Vec<usize> = (0..encoded.len()).collect();
            order.shuffle(rng);
            let mut total = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(batch_size) {
                let batch: Vec<(SentenceEncoding, bool)> =
                    chunk.iter().map(|&i| encoded[i].clone()).collect();
                total += model.train_step(&batch, &mut adam, rng)?;
                batches += 1;
            }
            Ok(total / batches as f64)
        },
        |model| {
            let m = evaluate_classifier(model, &vocab, val)?;
            Ok(-m.distance_to_ideal())
        },
    )?;

    let val_metrics = evaluate_classifier(&model, &vocab, val)?;
    Ok(TrainedClassifier {
        model,
        vocab,
        history,
        val_metrics,
    })
}

/// Train the tagger with validation-based early stopping, monitoring
/// micro-F1.
pub fn train_ner(
    config: &NerConfig,
    train: &NerSplit,
    val: &NerSplit,
    policy: &EarlyStopPolicy,
    seed: u64,
    pretrained: Option<&WordVectors>,
    vocab_override: Option<Vocabulary>,
) -> Result<TrainedNer, TrainerError> {
    let config = config.clone();
    check_pretrained(config.embedding_init, config.word_dim, pretrained)?;
    assert!(!train.is_empty() && !val.is_empty(), "empty split");
    let vocab = match vocab_override {
        Some(v) => v,
        None => build_vocabulary(train.sentences.iter().map(|s| s.tokens.as_slice()), 1)?,
    };
    let encoded: Vec<(SentenceEncoding, Vec<Label>)> = train
        .sentences
        .iter()
        .map(|s| {
            let enc = vocab.encode(&s.tokens, config.max_len);
            let gold = s.labels[..enc.len()].to_vec();
            (enc, gold)
        })
        .collect();

    let mut adam = crate::tensor::AdamState::new();
    let batch_size = policy.batch_size;
    let vocab_for_factory = vocab.clone();
    let config_for_factory = config.clone();
    let (model, history) = train_with_early_stop(
        policy,
        seed,
        move |seed| {
            let mut model = NerModel::with_dims(
                config_for_factory.clone(),
                vocab_for_factory.word_count(),
                vocab_for_factory.char_count(),
                seed,
            );
            if let Some(wv) = pretrained {
                model.set_word_embedding_table(wv.build_table(&vocab_for_factory, seed));
            }
            Ok(model)
        },
        move |model, _epoch, rng| {
            let mut order: Vec<usize> = (0..encoded.len()).collect();
            order.shuffle(rng);
            let mut total = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(batch_size) {
                let batch: Vec<(SentenceEncoding, Vec<Label>)> =
                    chunk.iter().map(|&i| encoded[i].clone()).collect();
                total += model.train_step(&batch, &mut adam, rng)?;
                batches += 1;
            }
            Ok(total / batches as f64)
        },
        |model| {
            let m = evaluate_ner(model, &vocab, val)?;
            Ok(m.micro_f1)
        },
    )?;

    let val_metrics = evaluate_ner(&model, &vocab, val)?;
    Ok(TrainedNer {
        model,
        vocab,
        history,
        val_metrics,
    })
}
