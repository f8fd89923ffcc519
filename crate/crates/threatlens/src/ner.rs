//! Char+word BiLSTM-CRF entity tagger.
//!
//! Each word is represented by its embedding concatenated with the final
//! states of a character-level BiLSTM, the sentence is read by a
//! word-level BiLSTM at every position, a fully-connected layer scores the
//! six labels per word, and a linear-chain CRF decodes the joint label
//! sequence.

use serde::{Deserialize, Serialize};

use crate::classifier::EmbeddingInit;
use crate::crf::{self, CrfError, CrfParams, EmissionMatrix};
use crate::tensor::{
    bilstm_all, bilstm_final, param_rng, xavier_uniform, AdamState, DropoutMode, LstmCell,
    LstmCellVars, Param, Tape, Tensor, TensorError, VarId,
};
use crate::textprep::{SentenceEncoding, Vocabulary, DEFAULT_MAX_LEN};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Dropout probability used wherever a dropout layer is enabled.
pub const NER_DROPOUT_P: f64 = 0.5;

#[derive(Debug, Error)]
pub enum NerError {
    #[error("invalid tagger configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Crf(#[from] CrfError),
}

/// The entity label set. `O` marks tokens carrying no useful information;
/// the other five mark organizations, products/assets, version numbers,
/// vulnerability/threat mentions, and repository or patch identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "O")]
    O,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "PRO")]
    Pro,
    #[serde(rename = "VER")]
    Ver,
    #[serde(rename = "VUL")]
    Vul,
    #[serde(rename = "ID")]
    Id,
}

pub const LABEL_COUNT: usize = 6;

impl Label {
    pub const ALL: [Label; LABEL_COUNT] = [
        Label::O,
        Label::Org,
        Label::Pro,
        Label::Ver,
        Label::Vul,
        Label::Id,
    ];

    pub fn index(self) -> usize {
        match self {
            Label::O => 0,
            Label::Org => 1,
            Label::Pro => 2,
            Label::Ver => 3,
            Label::Vul => 4,
            Label::Id => 5,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::O => "O",
            Label::Org => "ORG",
            Label::Pro => "PRO",
            Label::Ver => "VER",
            Label::Vul => "VUL",
            Label::Id => "ID",
        }
    }

    pub fn parse(s: &str) -> Result<Self, NerError> {
        match s {
            "O" => Ok(Label::O),
            "ORG" => Ok(Label::Org),
            "PRO" => Ok(Label::Pro),
            "VER" => Ok(Label::Ver),
            "VUL" => Ok(Label::Vul),
            "ID" => Ok(Label::Id),
            other => Err(NerError::UnknownLabel(other.to_owned())),
        }
    }
}

/// Tagger hyperparameters. Dropout probability is fixed at 0.5; only the
/// placement (after the char layer, after the word layer) varies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NerConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub word_hidden: usize,
    pub dropout_after_char: bool,
    pub dropout_after_word: bool,
    pub embedding_init: EmbeddingInit,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

impl NerConfig {
    pub fn validated(self) -> Result<Self, NerError> {
        if ![25, 50, 100].contains(&self.char_dim) {
            return Err(NerError::InvalidConfig(format!(
                "char dim must be one of 25/50/100, got {}",
                self.char_dim
            )));
        }
        if ![100, 200, 300].contains(&self.char_hidden) {
            return Err(NerError::InvalidConfig(format!(
                "char hidden size must be one of 100/200/300, got {}",
                self.char_hidden
            )));
        }
        if ![100, 200, 300].contains(&self.word_hidden) {
            return Err(NerError::InvalidConfig(format!(
                "word hidden size must be one of 100/200/300, got {}",
                self.word_hidden
            )));
        }
        let dims_ok = match self.embedding_init {
            EmbeddingInit::Random => [100, 200, 300].contains(&self.word_dim),
            EmbeddingInit::Pretrained => self.word_dim == 300,
        };
        if !dims_ok {
            return Err(NerError::InvalidConfig(format!(
                "word dim {} is not valid for {:?} initialization",
                self.word_dim, self.embedding_init
            )));
        }
        if self.max_len == 0 {
            return Err(NerError::InvalidConfig("max_len must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn from_json(json: &str) -> Result<Self, NerError> {
        let cfg: Self =
            serde_json::from_str(json).map_err(|e| NerError::InvalidConfig(e.to_string()))?;
        cfg.validated()
    }

    /// Width of one word representation: word embedding plus both final
    /// char states.
    pub fn word_repr_width(&self) -> usize {
        self.word_dim + 2 * self.char_hidden
    }
}

/// A contiguous run of one non-O label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

/// A tweet with one label per token and the derived entity spans.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedTweet {
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
    pub spans: Vec<EntitySpan>,
}

/// Spans are maximal runs of the same non-O label.
pub fn extract_spans(labels: &[Label]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &label) in labels.iter().enumerate() {
        match start {
            Some((s, current)) if current != label => {
                if current != Label::O {
                    spans.push(EntitySpan {
                        start: s,
                        end: i,
                        label: current,
                    });
                }
                start = Some((i, label));
            }
            None => start = Some((i, label)),
            _ => {}
        }
    }
    if let Some((s, current)) = start {
        if current != Label::O {
            spans.push(EntitySpan {
                start: s,
                end: labels.len(),
                label: current,
            });
        }
    }
    spans
}

/// The trained tagger.
#[derive(Debug, Clone)]
pub struct NerModel {
    pub config: NerConfig,
    pub word_embedding: Param,
    pub char_embedding: Param,
    pub char_fwd: LstmCell,
    pub char_bwd: LstmCell,
    pub word_fwd: LstmCell,
    pub word_bwd: LstmCell,
    /// `[2·word_hidden × 6]` projection to per-label scores.
    pub proj_w: Param,
    pub proj_b: Param,
    pub crf: CrfParams,
    pub embedding_frozen: bool,
}

struct ModelVars {
    word_embedding: VarId,
    char_embedding: VarId,
    char_fwd: LstmCellVars,
    char_bwd: LstmCellVars,
    word_fwd: LstmCellVars,
    word_bwd: LstmCellVars,
    proj_w: VarId,
    proj_b: VarId,
    transitions: VarId,
}

impl NerModel {
    /// Build a randomly initialized tagger for a validated configuration.
    pub fn new(
        config: NerConfig,
        vocab_words: usize,
        vocab_chars: usize,
        seed: u64,
    ) -> Result<Self, NerError> {
        let config = config.validated()?;
        Ok(Self::with_dims(config, vocab_words, vocab_chars, seed))
    }

    /// Build without the accepted-set check on the configuration, for small
    /// experimental models.
    pub fn with_dims(
        config: NerConfig,
        vocab_words: usize,
        vocab_chars: usize,
        seed: u64,
    ) -> Self {
        assert!(vocab_words >= 2 && vocab_chars >= 2);
        assert!(config.word_dim >= 1 && config.char_dim >= 1);
        assert!(config.char_hidden >= 1 && config.word_hidden >= 1);
        let word_embedding = {
            let mut rng = param_rng(seed, "word_embedding");
            Param::new(xavier_uniform(&[vocab_words, config.word_dim], &mut rng))
        };
        let char_embedding = {
            let mut rng = param_rng(seed, "char_embedding");
            Param::new(xavier_uniform(&[vocab_chars, config.char_dim], &mut rng))
        };
        let char_fwd = LstmCell::new(config.char_dim, config.char_hidden, seed, "char_fwd");
        let char_bwd = LstmCell::new(config.char_dim, config.char_hidden, seed, "char_bwd");
        let repr = config.word_repr_width();
        let word_fwd = LstmCell::new(repr, config.word_hidden, seed, "word_fwd");
        let word_bwd = LstmCell::new(repr, config.word_hidden, seed, "word_bwd");
        let proj_w = {
            let mut rng = param_rng(seed, "proj.weight");
            Param::new(xavier_uniform(
                &[2 * config.word_hidden, LABEL_COUNT],
                &mut rng,
            ))
        };
        let proj_b = Param::new(Tensor::zeros(&[LABEL_COUNT]));
        let crf = CrfParams::new(LABEL_COUNT, seed);
        Self {
            config,
            word_embedding,
            char_embedding,
            char_fwd,
            char_bwd,
            word_fwd,
            word_bwd,
            proj_w,
            proj_b,
            crf,
            embedding_frozen: false,
        }
    }

    /// Replace the word embedding table, e.g. with pretrained vectors.
    pub fn set_word_embedding_table(&mut self, table: Tensor) {
        assert_eq!(table.shape().len(), 2);
        assert_eq!(table.shape()[1], self.config.word_dim);
        self.word_embedding = Param::new(table);
    }

    pub fn named_params(&self) -> Vec<(String, Param)> {
        let mut out = vec![
            ("word_embedding".to_owned(), self.word_embedding.clone()),
            ("char_embedding".to_owned(), self.char_embedding.clone()),
        ];
        out.extend(self.char_fwd.named_params("char_fwd"));
        out.extend(self.char_bwd.named_params("char_bwd"));
        out.extend(self.word_fwd.named_params("word_fwd"));
        out.extend(self.word_bwd.named_params("word_bwd"));
        out.push(("proj.weight".to_owned(), self.proj_w.clone()));
        out.push(("proj.bias".to_owned(), self.proj_b.clone()));
        out.push(("crf.transitions".to_owned(), self.crf.transitions.clone()));
        out
    }

    /// Parameters updated by the optimizer; excludes a frozen word
    /// embedding (char embeddings are always learned).
    pub fn trainable_params(&self) -> Vec<Param> {
        self.named_params()
            .into_iter()
            .filter(|(name, _)| !(self.embedding_frozen && name == "word_embedding"))
            .map(|(_, p)| p)
            .collect()
    }

    fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            word_embedding: tape.param(&self.word_embedding),
            char_embedding: tape.param(&self.char_embedding),
            char_fwd: self.char_fwd.vars(tape),
            char_bwd: self.char_bwd.vars(tape),
            word_fwd: self.word_fwd.vars(tape),
            word_bwd: self.word_bwd.vars(tape),
            proj_w: tape.param(&self.proj_w),
            proj_b: tape.param(&self.proj_b),
            transitions: tape.param(&self.crf.transitions),
        }
    }

    /// Per-word representations `[n × (word_dim + 2·char_hidden)]`: word
    /// embedding concatenated with the char BiLSTM's final states, with the
    /// optional post-char dropout applied.
    fn encode_words(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        enc: &SentenceEncoding,
        mode: &mut DropoutMode,
    ) -> Result<VarId, NerError> {
        assert!(!enc.is_empty(), "cannot encode an empty sentence");
        let mut rows = Vec::with_capacity(enc.len());
        for (word_id, chars) in enc.word_ids.iter().zip(&enc.char_ids) {
            let word_matrix = tape.embed(vars.word_embedding, &[*word_id])?;
            let word_vec = tape.reshape(word_matrix, &[self.config.word_dim]);
            let char_matrix = tape.embed(vars.char_embedding, chars)?;
            let char_vec = bilstm_final(tape, &vars.char_fwd, &vars.char_bwd, char_matrix)?;
            rows.push(tape.concat(&[word_vec, char_vec]));
        }
        let stacked = tape.stack_rows(&rows);
        if self.config.dropout_after_char {
            Ok(tape.dropout(stacked, NER_DROPOUT_P, mode)?)
        } else {
            Ok(stacked)
        }
    }

    /// Per-position label scores `[n × 6]`: word representations through
    /// the word-level BiLSTM at every position, optional dropout, then the
    /// fully-connected projection.
    fn emissions(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        enc: &SentenceEncoding,
        mode: &mut DropoutMode,
    ) -> Result<VarId, NerError> {
        let reprs = self.encode_words(tape, vars, enc, mode)?;
        let mut states = bilstm_all(tape, &vars.word_fwd, &vars.word_bwd, reprs)?;
        if self.config.dropout_after_word {
            states = tape.dropout(states, NER_DROPOUT_P, mode)?;
        }
        let n = enc.len();
        let mut rows = Vec::with_capacity(n);
        for t in 0..n {
            let state = tape.row(states, t);
            let z = tape.vecmat(state, vars.proj_w);
            rows.push(tape.add(z, vars.proj_b));
        }
        Ok(tape.stack_rows(&rows))
    }

    /// Emission scores at inference, as a plain matrix.
    pub fn emission_scores(&self, enc: &SentenceEncoding) -> Result<EmissionMatrix, NerError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let e = self.emissions(&mut tape, &vars, enc, &mut DropoutMode::Infer)?;
        Ok(EmissionMatrix::from_values(
            enc.len(),
            LABEL_COUNT,
            tape.value(e).to_vec(),
        )?)
    }

    /// Viterbi-decode the label sequence for an encoded sentence.
    pub fn tag_ids(&self, enc: &SentenceEncoding) -> Result<Vec<Label>, NerError> {
        let em = self.emission_scores(enc)?;
        let transitions = self.crf.transitions.snapshot();
        let (path, _) = crf::viterbi(&em, &transitions);
        Ok(path
            .into_iter()
            .map(|i| Label::from_index(i).expect("decoder emits valid labels"))
            .collect())
    }

    /// Tag pre-encoded tokens. `tokens` must be the token sequence the
    /// encoding was built from; both are truncated to the encoded length.
    pub fn tag(&self, tokens: &[String], enc: &SentenceEncoding) -> Result<TaggedTweet, NerError> {
        assert!(
            enc.len() <= tokens.len(),
            "encoding is longer than the token list"
        );
        let labels = self.tag_ids(enc)?;
        let tokens = tokens[..labels.len()].to_vec();
        let spans = extract_spans(&labels);
        Ok(TaggedTweet {
            tokens,
            labels,
            spans,
        })
    }

    /// Encode and tag tokens in one call.
    pub fn tag_tokens(
        &self,
        tokens: &[String],
        vocab: &Vocabulary,
    ) -> Result<TaggedTweet, NerError> {
        let enc = vocab.encode(tokens, self.config.max_len);
        self.tag(tokens, &enc)
    }

    /// CRF negative log-likelihood of one gold-labeled sentence, forward
    /// only, dropout disabled. The finite-difference reference for
    /// `train_step`'s gradients.
    pub fn sentence_nll(
        &self,
        enc: &SentenceEncoding,
        labels: &[Label],
    ) -> Result<f64, NerError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let e = self.emissions(&mut tape, &vars, enc, &mut DropoutMode::Infer)?;
        let gold: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        let loss = tape.crf_nll(e, vars.transitions, &gold)?;
        Ok(tape.scalar_value(loss))
    }

    /// Mean NLL over a batch, forward only, dropout disabled.
    pub fn batch_nll(&self, batch: &[(SentenceEncoding, Vec<Label>)]) -> Result<f64, NerError> {
        assert!(!batch.is_empty(), "empty batch");
        let mut total = 0.0;
        for (enc, labels) in batch {
            total += self.sentence_nll(enc, labels)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Like [`Self::batch_nll`], but also runs the backward passes so the
    /// parameters' gradient slots are populated (no optimizer step).
    pub fn batch_nll_backward(
        &self,
        batch: &[(SentenceEncoding, Vec<Label>)],
    ) -> Result<f64, NerError> {
        assert!(!batch.is_empty(), "empty batch");
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (enc, labels) in batch {
            let mut tape = Tape::new();
            let vars = self.register(&mut tape);
            let e = self.emissions(&mut tape, &vars, enc, &mut DropoutMode::Infer)?;
            let gold: Vec<usize> = labels.iter().map(|l| l.index()).collect();
            let loss = tape.crf_nll(e, vars.transitions, &gold)?;
            total += tape.scalar_value(loss);
            tape.backward_seeded(loss, scale);
        }
        Ok(total * scale)
    }

    /// One optimizer step on a batch of gold-labeled sentences: mean CRF
    /// NLL, backward, Adam. Each sentence runs on its own tape with the
    /// `1/batch` factor folded into the backward seed, so gradients
    /// accumulate across sentences before the single optimizer step.
    pub fn train_step(
        &mut self,
        batch: &[(SentenceEncoding, Vec<Label>)],
        adam: &mut AdamState,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, NerError> {
        assert!(!batch.is_empty(), "empty batch");
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut mode = DropoutMode::Train(rng);
        for (enc, labels) in batch {
            let mut tape = Tape::new();
            let vars = self.register(&mut tape);
            let e = self.emissions(&mut tape, &vars, enc, &mut mode)?;
            let gold: Vec<usize> = labels.iter().map(|l| l.index()).collect();
            let loss = tape.crf_nll(e, vars.transitions, &gold)?;
            let value = tape.scalar_value(loss);
            if !value.is_finite() {
                return Err(TensorError::NonFinite {
                    context: "tagger sentence loss",
                }
                .into());
            }
            total += value;
            tape.backward_seeded(loss, scale);
        }
        adam.step(&self.trainable_params())?;
        Ok(total * scale)
    }
}
