//! Grid search over the tuning spaces, with k-fold cross-validation per
//! configuration and a machine-readable report.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::dataset::{ClassificationSplit, Dataset, NerSplit};
use super::earlystop::EarlyStopPolicy;
use super::embeddings::WordVectors;
use super::kfold::kfold;
use super::metrics::{evaluate_classifier, evaluate_ner};
use super::train::{train_classifier, train_ner};
use super::TrainerError;
use crate::classifier::{ClassifierConfig, EmbeddingInit};
use crate::ner::NerConfig;
use crate::textprep::DEFAULT_MAX_LEN;

/// How kernel heights grow with the kernel count: sequentially from 2, or
/// by parity (odd from 3, even from 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightScheme {
    Sequential,
    Odd,
    Even,
}

impl HeightScheme {
    pub fn heights(self, count: usize) -> Vec<usize> {
        match self {
            HeightScheme::Sequential => (0..count).map(|i| 2 + i).collect(),
            HeightScheme::Odd => (0..count).map(|i| 3 + 2 * i).collect(),
            HeightScheme::Even => (0..count).map(|i| 2 + 2 * i).collect(),
        }
    }
}

/// Classifier tuning space.
#[derive(Debug, Clone)]
pub struct ClassifierGrid {
    pub embedding_init: EmbeddingInit,
    pub embedding_dims: Vec<usize>,
    pub kernel_counts: Vec<usize>,
    pub height_schemes: Vec<HeightScheme>,
    pub filter_counts: Vec<usize>,
    pub dropout_rates: Vec<f64>,
    pub max_len: usize,
}

impl ClassifierGrid {
    /// The published tuning space: dims {100,200,300} (300 only for
    /// pretrained vectors), 3–6 kernels under three height schemes,
    /// filters {64,128,192,256}, dropout {0.3,0.5,0.6}.
    pub fn paper(embedding_init: EmbeddingInit) -> Self {
        let embedding_dims = match embedding_init {
            EmbeddingInit::Random => vec![100, 200, 300],
            EmbeddingInit::Pretrained => vec![300],
        };
        Self {
            embedding_init,
            embedding_dims,
            kernel_counts: vec![3, 4, 5, 6],
            height_schemes: vec![HeightScheme::Sequential, HeightScheme::Odd, HeightScheme::Even],
            filter_counts: vec![64, 128, 192, 256],
            dropout_rates: vec![0.3, 0.5, 0.6],
            max_len: DEFAULT_MAX_LEN,
        }
    }

    /// The full cartesian product, in deterministic grid order.
    pub fn configs(&self) -> Vec<ClassifierConfig> {
        let mut out = Vec::new();
        for &dim in &self.embedding_dims {
            for &count in &self.kernel_counts {
                for &scheme in &self.height_schemes {
                    for &filters in &self.filter_counts {
                        for &dropout in &self.dropout_rates {
                            out.push(ClassifierConfig {
                                embedding_dim: dim,
                                embedding_init: self.embedding_init,
                                kernel_heights: scheme.heights(count),
                                filters_per_kernel: filters,
                                dropout_p: dropout,
                                max_len: self.max_len,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Tagger tuning space.
#[derive(Debug, Clone)]
pub struct NerGrid {
    pub embedding_init: EmbeddingInit,
    pub word_dims: Vec<usize>,
    pub char_dims: Vec<usize>,
    pub char_hiddens: Vec<usize>,
    pub word_hiddens: Vec<usize>,
    /// (after char layer, after word layer)
    pub dropout_placements: Vec<(bool, bool)>,
    pub max_len: usize,
}

impl NerGrid {
    /// The published tuning space: word dims as for the classifier, char
    /// dims {25,50,100}, both hidden sizes {100,200,300}, and the four
    /// dropout placements.
    pub fn paper(embedding_init: EmbeddingInit) -> Self {
        let word_dims = match embedding_init {
            EmbeddingInit::Random => vec![100, 200, 300],
            EmbeddingInit::Pretrained => vec![300],
        };
        Self {
            embedding_init,
            word_dims,
            char_dims: vec![25, 50, 100],
            char_hiddens: vec![100, 200, 300],
            word_hiddens: vec![100, 200, 300],
            dropout_placements: vec![(false, false), (true, false), (false, true), (true, true)],
            max_len: DEFAULT_MAX_LEN,
        }
    }

    pub fn configs(&self) -> Vec<NerConfig> {
        let mut out = Vec::new();
        for &word_dim in &self.word_dims {
            for &char_dim in &self.char_dims {
                for &char_hidden in &self.char_hiddens {
                    for &word_hidden in &self.word_hiddens {
                        for &(after_char, after_word) in &self.dropout_placements {
                            out.push(NerConfig {
                                word_dim,
                                char_dim,
                                char_hidden,
                                word_hidden,
                                dropout_after_char: after_char,
                                dropout_after_word: after_word,
                                embedding_init: self.embedding_init,
                                max_len: self.max_len,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum GridSpec {
    Classifier(ClassifierGrid),
    Ner(NerGrid),
}

impl GridSpec {
    pub fn len(&self) -> usize {
        match self {
            GridSpec::Classifier(g) => g.configs().len(),
            GridSpec::Ner(g) => g.configs().len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One grid row: the configuration, its per-fold and mean metrics, the
/// selection metric, and the final rank (1 = best; `None` if the
/// configuration failed).
#[derive(Debug, Clone, Serialize)]
pub struct GridEntry {
    pub index: usize,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub fold_metrics: Vec<serde_json::Value>,
    pub mean_metrics: serde_json::Value,
    pub selection_metric: Option<f64>,
    pub rank: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub task: String,
    pub entries: Vec<GridEntry>,
}

impl GridReport {
    /// One JSON object per line, in grid order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), TrainerError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// Index of the rank-1 entry.
    pub fn best_index(&self) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.rank == Some(1))
            .map(|e| e.index)
    }
}

fn config_hash(config: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.to_string().as_bytes());
    hex::encode(&hasher.finalize()[..6])
}

fn fold_seed(base: u64, config_idx: usize, fold_idx: usize) -> u64 {
    base.wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add((config_idx as u64) << 16)
        .wrapping_add(fold_idx as u64)
}

fn assign_ranks(entries: &mut [GridEntry], higher_is_better: bool) {
    let mut scored: Vec<(usize, f64)> = entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.selection_metric.map(|m| (i, m)))
        .collect();
    scored.sort_by(|a, b| {
        let ord = a.1.partial_cmp(&b.1).expect("metrics are finite");
        if higher_is_better {
            ord.reverse()
        } else {
            ord
        }
    });
    for (rank, (i, _)) in scored.into_iter().enumerate() {
        entries[i].rank = Some(rank + 1);
    }
}

/// Exhaustive grid search with `folds`-fold cross-validation per
/// configuration. A configuration failure is recorded in its entry, not
/// fatal. The report ranks configurations by the task's selection rule
/// (distance to the (1,1) rate pair for classification, micro-F1 for the
/// tagger); grid order breaks ties.
pub fn grid_search(
    spec: &GridSpec,
    data: &Dataset,
    folds: usize,
    policy: &EarlyStopPolicy,
    seed: u64,
    pretrained: Option<&WordVectors>,
) -> Result<GridReport, TrainerError> {
    match (spec, data) {
        (GridSpec::Classifier(grid), Dataset::Classification(split)) => {
            grid_search_classifier(grid, split, folds, policy, seed, pretrained)
        }
        (GridSpec::Ner(grid), Dataset::Ner(split)) => {
            grid_search_ner(grid, split, folds, policy, seed, pretrained)
        }
        (GridSpec::Classifier(_), _) => Err(TrainerError::WrongKind {
            expected: "classification",
        }),
        (GridSpec::Ner(_), _) => Err(TrainerError::WrongKind { expected: "ner" }),
    }
}

fn grid_search_classifier(
    grid: &ClassifierGrid,
    split: &ClassificationSplit,
    folds: usize,
    policy: &EarlyStopPolicy,
    seed: u64,
    pretrained: Option<&WordVectors>,
) -> Result<GridReport, TrainerError> {
    let partitions = kfold(split.len(), folds, seed)?;
    let mut entries = Vec::new();
    for (index, config) in grid.configs().into_iter().enumerate() {
        let config_json = serde_json::to_value(&config)?;
        let mut entry = GridEntry {
            index,
            config_hash: config_hash(&config_json),
            config: config_json,
            fold_metrics: Vec::new(),
            mean_metrics: serde_json::Value::Null,
            selection_metric: None,
            rank: None,
            error: None,
        };
        let mut result = || -> Result<(), TrainerError> {
            let (mut tpr_sum, mut tnr_sum) = (0.0, 0.0);
            for (fold_idx, fold) in partitions.iter().enumerate() {
                let train_sub = split.subset(&fold.train, "cv-train");
                let val_sub = split.subset(&fold.val, "cv-val");
                let outcome = train_classifier(
                    &config,
                    &train_sub,
                    &val_sub,
                    policy,
                    fold_seed(seed, index, fold_idx),
                    pretrained,
                    None,
                )?;
                let metrics = evaluate_classifier(&outcome.model, &outcome.vocab, &val_sub)?;
                tpr_sum += metrics.tpr;
                tnr_sum += metrics.tnr;
                entry.fold_metrics.push(serde_json::to_value(metrics)?);
            }
            let n = partitions.len() as f64;
            let (tpr, tnr) = (tpr_sum / n, tnr_sum / n);
            let distance = ((1.0 - tpr).powi(2) + (1.0 - tnr).powi(2)).sqrt();
            entry.mean_metrics =
                serde_json::json!({ "tpr": tpr, "tnr": tnr, "distance": distance });
            entry.selection_metric = Some(distance);
            Ok(())
        };
        if let Err(e) = result() {
            entry.error = Some(e.to_string());
        }
        entries.push(entry);
    }
    assign_ranks(&mut entries, false);
    Ok(GridReport {
        task: "classifier".to_owned(),
        entries,
    })
}

fn grid_search_ner(
    grid: &NerGrid,
    split: &NerSplit,
    folds: usize,
    policy: &EarlyStopPolicy,
    seed: u64,
    pretrained: Option<&WordVectors>,
) -> Result<GridReport, TrainerError> {
    let partitions = kfold(split.len(), folds, seed)?;
    let mut entries = Vec::new();
    for (index, config) in grid.configs().into_iter().enumerate() {
        let config_json = serde_json::to_value(&config)?;
        let mut entry = GridEntry {
            index,
            config_hash: config_hash(&config_json),
            config: config_json,
            fold_metrics: Vec::new(),
            mean_metrics: serde_json::Value::Null,
            selection_metric: None,
            rank: None,
            error: None,
        };
        let mut result = || -> Result<(), TrainerError> {
            let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
            for (fold_idx, fold) in partitions.iter().enumerate() {
                let train_sub = split.subset(&fold.train, "cv-train");
                let val_sub = split.subset(&fold.val, "cv-val");
                let outcome = train_ner(
                    &config,
                    &train_sub,
                    &val_sub,
                    policy,
                    fold_seed(seed, index, fold_idx),
                    pretrained,
                    None,
                )?;
                let metrics = evaluate_ner(&outcome.model, &outcome.vocab, &val_sub)?;
                p_sum += metrics.micro_precision;
                r_sum += metrics.micro_recall;
                f_sum += metrics.micro_f1;
                entry.fold_metrics.push(serde_json::to_value(&metrics)?);
            }
            let n = partitions.len() as f64;
            entry.mean_metrics = serde_json::json!({
                "micro_precision": p_sum / n,
                "micro_recall": r_sum / n,
                "micro_f1": f_sum / n,
            });
            entry.selection_metric = Some(f_sum / n);
            Ok(())
        };
        if let Err(e) = result() {
            entry.error = Some(e.to_string());
        }
        entries.push(entry);
    }
    assign_ranks(&mut entries, true);
    Ok(GridReport {
        task: "ner".to_owned(),
        entries,
    })
}
