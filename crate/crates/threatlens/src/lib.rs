//! Tweet-stream cyberthreat triage.
//!
//! The crate implements a three-stage processing pipeline over a replayed
//! tweet stream: keyword-based filtering of tweets against a monitored
//! infrastructure, a convolutional relevance classifier, and a char+word
//! BiLSTM-CRF tagger that extracts security entities (products, versions,
//! vulnerabilities, identifiers) from the tweets that survive both filters.
//!
//! Supporting subsystems: a minimal reverse-mode autodiff tensor core with an
//! Adam optimizer ([`tensor`]), a linear-chain CRF layer ([`crf`]), dataset
//! loading / k-fold cross-validation / early stopping / grid search
//! ([`trainer`]), self-contained model checkpoints ([`checkpoint`]), and the
//! end-to-end pipeline plus its CLI ([`pipeline`], [`cli`]).

pub mod checkpoint;
pub mod classifier;
pub mod cli;
pub mod crf;
pub mod ner;
pub mod pipeline;
pub mod tensor;
pub mod textprep;
pub mod trainer;

pub use classifier::{ClassifierConfig, ClassifierModel};
pub use ner::{Label, NerConfig, NerModel, TaggedTweet};
pub use pipeline::{AlertRecord, PipelineConfig, RunSummary};
pub use tensor::{Param, Tape, Tensor, VarId};
pub use textprep::{KeywordSet, SentenceEncoding, TokenizedTweet, Tweet, Vocabulary};
