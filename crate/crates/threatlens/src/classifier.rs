//! Convolutional relevance classifier.
//!
//! Embeds a tweet's word ids, runs a bank of text convolutions with
//! max-over-time pooling, applies dropout to the pooled feature vector, and
//! feeds a two-class softmax head. The positive class is "relevant": the
//! tweet is worth passing to entity extraction.

use serde::{Deserialize, Serialize};

use crate::tensor::{
    param_rng, xavier_uniform, Activation, AdamState, DropoutMode, Param, Tape, Tensor,
    TensorError, VarId,
};
use crate::textprep::{SentenceEncoding, DEFAULT_MAX_LEN, PAD_ID};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid classifier configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// How the word embedding table is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingInit {
    Random,
    Pretrained,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

/// Hyperparameters of the classifier. The accepted values mirror the tuning
/// ranges the models are searched over; `validated()` enforces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub embedding_dim: usize,
    pub embedding_init: EmbeddingInit,
    pub kernel_heights: Vec<usize>,
    pub filters_per_kernel: usize,
    pub dropout_p: f64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

impl ClassifierConfig {
    /// Canonicalize and validate: heights are sorted ascending (the kernel
    /// list order carries no meaning) and every field must come from its
    /// accepted set.
    pub fn validated(mut self) -> Result<Self, ClassifierError> {
        self.kernel_heights.sort_unstable();
        let k = self.kernel_heights.len();
        if !(3..=6).contains(&k) {
            return Err(ClassifierError::InvalidConfig(format!(
                "kernel count must be between 3 and 6, got {k}"
            )));
        }
        if self.kernel_heights.windows(2).any(|w| w[0] == w[1]) {
            return Err(ClassifierError::InvalidConfig(
                "kernel heights must be distinct".into(),
            ));
        }
        if self.kernel_heights[0] == 0 {
            return Err(ClassifierError::InvalidConfig(
                "kernel heights must be at least 1".into(),
            ));
        }
        if ![64, 128, 192, 256].contains(&self.filters_per_kernel) {
            return Err(ClassifierError::InvalidConfig(format!(
                "filters per kernel must be one of 64/128/192/256, got {}",
                self.filters_per_kernel
            )));
        }
        if ![0.3, 0.5, 0.6].contains(&self.dropout_p) {
            return Err(ClassifierError::InvalidConfig(format!(
                "dropout must be one of 0.3/0.5/0.6, got {}",
                self.dropout_p
            )));
        }
        let dims_ok = match self.embedding_init {
            EmbeddingInit::Random => [100, 200, 300].contains(&self.embedding_dim),
            EmbeddingInit::Pretrained => self.embedding_dim == 300,
        };
        if !dims_ok {
            return Err(ClassifierError::InvalidConfig(format!(
                "embedding dim {} is not valid for {:?} initialization",
                self.embedding_dim, self.embedding_init
            )));
        }
        if self.max_len < *self.kernel_heights.last().unwrap() {
            return Err(ClassifierError::InvalidConfig(
                "max_len must cover the tallest kernel".into(),
            ));
        }
        Ok(self)
    }

    pub fn from_json(json: &str) -> Result<Self, ClassifierError> {
        let cfg: Self = serde_json::from_str(json)
            .map_err(|e| ClassifierError::InvalidConfig(e.to_string()))?;
        cfg.validated()
    }

    /// Length of the pooled feature vector: kernels × filters.
    pub fn feature_len(&self) -> usize {
        self.kernel_heights.len() * self.filters_per_kernel
    }
}

/// One convolution kernel: `filters` filters of height `height` over
/// `width`-dimensional embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub height: usize,
    pub filters: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
pub struct Kernel {
    pub spec: KernelSpec,
    /// `[filters × (height·width)]`, one flattened filter per row.
    pub weights: Param,
    /// `[filters × 1]`, one bias per filter.
    pub biases: Param,
}

/// The trained classifier.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub embedding: Param,
    pub kernels: Vec<Kernel>,
    /// `[k·f × 2]` output weights; class 1 is "relevant".
    pub out_w: Param,
    pub out_b: Param,
    pub embedding_frozen: bool,
}

struct KernelVars {
    filter_w: Vec<VarId>,
    filter_b: Vec<VarId>,
}

struct ModelVars {
    embedding: VarId,
    kernels: Vec<KernelVars>,
    out_w: VarId,
    out_b: VarId,
}

impl ClassifierModel {
    /// Build a randomly initialized model for a validated configuration.
    pub fn new(
        config: ClassifierConfig,
        vocab_words: usize,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        let config = config.validated()?;
        Ok(Self::with_dims(config, vocab_words, seed))
    }

    /// Build without the accepted-set check on the configuration. Useful
    /// for small experimental models; shapes are still enforced.
    pub fn with_dims(config: ClassifierConfig, vocab_words: usize, seed: u64) -> Self {
        assert!(vocab_words >= 2, "vocabulary must include PAD and UNK");
        assert!(!config.kernel_heights.is_empty());
        assert!(config.kernel_heights.windows(2).all(|w| w[0] < w[1]));
        assert!(config.filters_per_kernel >= 1 && config.embedding_dim >= 1);
        assert!((0.0..1.0).contains(&config.dropout_p));
        let d = config.embedding_dim;
        let f = config.filters_per_kernel;
        let embedding = {
            let mut rng = param_rng(seed, "embedding");
            Param::new(xavier_uniform(&[vocab_words, d], &mut rng))
        };
        let kernels = config
            .kernel_heights
            .iter()
            .map(|&h| {
                let mut rng = param_rng(seed, &format!("conv.h{h}.weight"));
                Kernel {
                    spec: KernelSpec {
                        height: h,
                        filters: f,
                        width: d,
                    },
                    weights: Param::new(xavier_uniform(&[f, h * d], &mut rng)),
                    biases: Param::new(Tensor::zeros(&[f, 1])),
                }
            })
            .collect();
        let feature_len = config.feature_len();
        let out_w = {
            let mut rng = param_rng(seed, "output.weight");
            Param::new(xavier_uniform(&[feature_len, 2], &mut rng))
        };
        let out_b = Param::new(Tensor::zeros(&[2]));
        Self {
            config,
            embedding,
            kernels,
            out_w,
            out_b,
            embedding_frozen: false,
        }
    }

    /// Replace the embedding table, e.g. with pretrained vectors. The table
    /// must be `[vocab × embedding_dim]`.
    pub fn set_embedding_table(&mut self, table: Tensor) {
        assert_eq!(table.shape().len(), 2);
        assert_eq!(table.shape()[1], self.config.embedding_dim);
        self.embedding = Param::new(table);
    }

    pub fn named_params(&self) -> Vec<(String, Param)> {
        let mut out = vec![("embedding".to_owned(), self.embedding.clone())];
        for k in &self.kernels {
            let h = k.spec.height;
            out.push((format!("conv.h{h}.weight"), k.weights.clone()));
            out.push((format!("conv.h{h}.bias"), k.biases.clone()));
        }
        out.push(("output.weight".to_owned(), self.out_w.clone()));
        out.push(("output.bias".to_owned(), self.out_b.clone()));
        out
    }

    /// Parameters updated by the optimizer; excludes a frozen embedding.
    pub fn trainable_params(&self) -> Vec<Param> {
        self.named_params()
            .into_iter()
            .filter(|(name, _)| !(self.embedding_frozen && name == "embedding"))
            .map(|(_, p)| p)
            .collect()
    }

    fn tallest_kernel(&self) -> usize {
        self.kernels.iter().map(|k| k.spec.height).max().unwrap()
    }

    fn register(&self, tape: &mut Tape) -> ModelVars {
        let embedding = tape.param(&self.embedding);
        let kernels = self
            .kernels
            .iter()
            .map(|k| {
                let (h, d, f) = (k.spec.height, k.spec.width, k.spec.filters);
                let w_all = tape.param(&k.weights);
                let b_all = tape.param(&k.biases);
                let mut filter_w = Vec::with_capacity(f);
                let mut filter_b = Vec::with_capacity(f);
                for j in 0..f {
                    let row = tape.row(w_all, j);
                    filter_w.push(tape.reshape(row, &[h, d]));
                    filter_b.push(tape.row(b_all, j));
                }
                KernelVars { filter_w, filter_b }
            })
            .collect();
        ModelVars {
            embedding,
            kernels,
            out_w: tape.param(&self.out_w),
            out_b: tape.param(&self.out_b),
        }
    }

    /// Ids fed to the embedding: truncated to `max_len`, right-padded with
    /// PAD to at least `min_len` (the tallest kernel, or the batch width).
    fn padded_ids(&self, enc: &SentenceEncoding, min_len: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = enc
            .word_ids
            .iter()
            .copied()
            .take(self.config.max_len)
            .collect();
        while ids.len() < min_len {
            ids.push(PAD_ID);
        }
        ids
    }

    fn features(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        enc: &SentenceEncoding,
        min_len: usize,
        mode: &mut DropoutMode,
    ) -> Result<VarId, ClassifierError> {
        let ids = self.padded_ids(enc, min_len.max(self.tallest_kernel()));
        let s = tape.embed(vars.embedding, &ids)?;
        let mut pooled = Vec::with_capacity(self.config.feature_len());
        for kv in &vars.kernels {
            for (w, b) in kv.filter_w.iter().zip(&kv.filter_b) {
                let map = tape.conv_text(s, *w, *b, Activation::Relu)?;
                pooled.push(tape.max_over_time(map)?);
            }
        }
        let features = tape.concat(&pooled);
        Ok(tape.dropout(features, self.config.dropout_p, mode)?)
    }

    /// Probability that the tweet is relevant, under the given dropout
    /// mode. Inference is deterministic.
    pub fn forward(
        &self,
        enc: &SentenceEncoding,
        mode: &mut DropoutMode,
    ) -> Result<f64, ClassifierError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let features = self.features(&mut tape, &vars, enc, 0, mode)?;
        let z = tape.vecmat(features, vars.out_w);
        let logits = tape.add(z, vars.out_b);
        let (probs, _) = tape.softmax_xent(logits, 0);
        Ok(probs[1])
    }

    pub fn predict_proba(&self, enc: &SentenceEncoding) -> Result<f64, ClassifierError> {
        self.forward(enc, &mut DropoutMode::Infer)
    }

    /// Relevant iff `p(relevant) ≥ threshold`; the boundary counts as
    /// relevant.
    pub fn predict_with_threshold(
        &self,
        enc: &SentenceEncoding,
        threshold: f64,
    ) -> Result<bool, ClassifierError> {
        Ok(self.predict_proba(enc)? >= threshold)
    }

    pub fn predict(&self, enc: &SentenceEncoding) -> Result<bool, ClassifierError> {
        self.predict_with_threshold(enc, 0.5)
    }

    fn batch_graph(
        &self,
        batch: &[(SentenceEncoding, bool)],
        mode: &mut DropoutMode,
    ) -> Result<(Tape, VarId), ClassifierError> {
        assert!(!batch.is_empty(), "empty batch");
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let min_len = batch.iter().map(|(e, _)| e.len()).max().unwrap();
        let mut losses = Vec::with_capacity(batch.len());
        for (enc, label) in batch {
            let features = self.features(&mut tape, &vars, enc, min_len, mode)?;
            let (_, loss) =
                tape.affine_softmax_xent(features, vars.out_w, vars.out_b, usize::from(*label));
            losses.push(loss);
        }
        let mean = tape.mean(&losses);
        Ok((tape, mean))
    }

    /// Mean cross-entropy over a batch, forward only, dropout disabled.
    /// The finite-difference reference for the training gradients.
    pub fn batch_loss(&self, batch: &[(SentenceEncoding, bool)]) -> Result<f64, ClassifierError> {
        let (tape, mean) = self.batch_graph(batch, &mut DropoutMode::Infer)?;
        Ok(tape.scalar_value(mean))
    }

    /// Like [`Self::batch_loss`], but also runs the backward pass so the
    /// parameters' gradient slots are populated (no optimizer step).
    pub fn batch_loss_backward(
        &self,
        batch: &[(SentenceEncoding, bool)],
    ) -> Result<f64, ClassifierError> {
        let (mut tape, mean) = self.batch_graph(batch, &mut DropoutMode::Infer)?;
        let value = tape.scalar_value(mean);
        tape.backward(mean);
        Ok(value)
    }

    /// One optimizer step on a batch: mean cross-entropy, backward, Adam.
    /// Examples are padded to the longest sentence in the batch.
    pub fn train_step(
        &mut self,
        batch: &[(SentenceEncoding, bool)],
        adam: &mut AdamState,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, ClassifierError> {
        let (mut tape, mean) = self.batch_graph(batch, &mut DropoutMode::Train(rng))?;
        let loss_value = tape.scalar_value(mean);
        if !loss_value.is_finite() {
            return Err(TensorError::NonFinite {
                context: "classifier batch loss",
            }
            .into());
        }
        tape.backward(mean);
        adam.step(&self.trainable_params())?;
        Ok(loss_value)
    }
}
