//! Evaluation metrics and the model-selection rules.

use serde::Serialize;

use super::dataset::{ClassificationSplit, NerSplit};
use super::TrainerError;
use crate::classifier::ClassifierModel;
use crate::ner::{extract_spans, Label, NerModel};
use crate::textprep::Vocabulary;

/// Binary classification counts and rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub true_positives: usize,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub tpr: f64,
    pub tnr: f64,
}

impl ClassMetrics {
    /// Build from `(predicted, gold)` pairs, `true` meaning relevant.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut tn, mut fp, mut fnn) = (0usize, 0usize, 0usize, 0usize);
        for (pred, gold) in pairs {
            match (pred, gold) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
            }
        }
        let tpr = if tp + fnn > 0 {
            tp as f64 / (tp + fnn) as f64
        } else {
            0.0
        };
        let tnr = if tn + fp > 0 {
            tn as f64 / (tn + fp) as f64
        } else {
            0.0
        };
        Self {
            true_positives: tp,
            true_negatives: tn,
            false_positives: fp,
            false_negatives: fnn,
            tpr,
            tnr,
        }
    }

    /// Euclidean distance of `(tpr, tnr)` from the ideal `(1, 1)`; the
    /// selection rule minimizes this.
    pub fn distance_to_ideal(&self) -> f64 {
        ((1.0 - self.tpr).powi(2) + (1.0 - self.tnr).powi(2)).sqrt()
    }
}

/// Precision/recall/F1 for one label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn prf(correct: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let p = if predicted > 0 {
        correct as f64 / predicted as f64
    } else {
        0.0
    };
    let r = if gold > 0 {
        correct as f64 / gold as f64
    } else {
        0.0
    };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// Tagger metrics: token-level micro scores over non-O tokens (primary),
/// a per-label breakdown, and exact-span entity scores (secondary).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NerMetrics {
    pub per_label: Vec<(Label, LabelMetrics)>,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
}

/// Compute tagger metrics from `(predicted, gold)` label sequences.
pub fn ner_metrics_from_pairs(pairs: &[(Vec<Label>, Vec<Label>)]) -> NerMetrics {
    let non_o: Vec<Label> = Label::ALL.into_iter().filter(|&l| l != Label::O).collect();
    let mut correct = [0usize; 6];
    let mut predicted = [0usize; 6];
    let mut gold_count = [0usize; 6];
    let (mut span_correct, mut span_pred, mut span_gold) = (0usize, 0usize, 0usize);
    for (pred, gold) in pairs {
        assert_eq!(pred.len(), gold.len(), "label sequences must align");
        for (&p, &g) in pred.iter().zip(gold) {
            if p != Label::O {
                predicted[p.index()] += 1;
            }
            if g != Label::O {
                gold_count[g.index()] += 1;
                if p == g {
                    correct[g.index()] += 1;
                }
            }
        }
        let pred_spans = extract_spans(pred);
        let gold_spans = extract_spans(gold);
        span_pred += pred_spans.len();
        span_gold += gold_spans.len();
        span_correct += pred_spans.iter().filter(|s| gold_spans.contains(s)).count();
    }

    let per_label = non_o
        .iter()
        .map(|&l| {
            let i = l.index();
            let (p, r, f1) = prf(correct[i], predicted[i], gold_count[i]);
            (
                l,
                LabelMetrics {
                    precision: p,
                    recall: r,
                    f1,
                    support: gold_count[i],
                },
            )
        })
        .collect();

    let total_correct: usize = correct.iter().sum();
    let total_pred: usize = predicted.iter().sum();
    let total_gold: usize = gold_count.iter().sum();
    let (micro_p, micro_r, micro_f1) = prf(total_correct, total_pred, total_gold);
    let (ent_p, ent_r, ent_f1) = prf(span_correct, span_pred, span_gold);

    NerMetrics {
        per_label,
        micro_precision: micro_p,
        micro_recall: micro_r,
        micro_f1,
        entity_precision: ent_p,
        entity_recall: ent_r,
        entity_f1: ent_f1,
    }
}

/// Run the classifier over a split and score it.
pub fn evaluate_classifier(
    model: &ClassifierModel,
    vocab: &Vocabulary,
    split: &ClassificationSplit,
) -> Result<ClassMetrics, TrainerError> {
    let mut pairs = Vec::with_capacity(split.len());
    for example in &split.examples {
        let enc = vocab.encode(&example.tokens, model.config.max_len);
        let pred = model.predict(&enc)?;
        pairs.push((pred, example.relevant));
    }
    Ok(ClassMetrics::from_pairs(pairs))
}

/// Run the tagger over a split and score it. Sentences are truncated to
/// the model's `max_len` for both prediction and gold.
pub fn evaluate_ner(
    model: &NerModel,
    vocab: &Vocabulary,
    split: &NerSplit,
) -> Result<NerMetrics, TrainerError> {
    let mut pairs = Vec::with_capacity(split.len());
    for sentence in &split.sentences {
        let enc = vocab.encode(&sentence.tokens, model.config.max_len);
        let pred = model.tag_ids(&enc)?;
        let gold = sentence.labels[..pred.len()].to_vec();
        pairs.push((pred, gold));
    }
    Ok(ner_metrics_from_pairs(&pairs))
}

/// Pick the candidate whose `(tpr, tnr)` is closest to the `(1, 1)` ideal;
/// earlier candidates win ties. Returns the winning index.
pub fn select_classifier(candidates: &[ClassMetrics]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.distance_to_ideal()
                .partial_cmp(&b.distance_to_ideal())
                .expect("metric distances are finite")
        })
        .map(|(i, _)| i)
}

/// Pick the candidate with the best micro-F1; earlier candidates win ties.
pub fn select_ner(candidates: &[NerMetrics]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.micro_f1
                .partial_cmp(&b.micro_f1)
                .expect("f1 is finite")
                // max_by keeps the LAST maximal element; invert index order
                // so earlier candidates win ties.
                .then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
}
