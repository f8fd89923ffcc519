//! Tweet normalization, keyword filtering, vocabularies, and integer
//! encoding of text for the networks.
//!
//! Everything here is a pure function over immutable inputs; no coordination
//! is needed for concurrent use.

mod keywords;
mod normalize;
mod tweets;
mod vocab;

pub use keywords::KeywordSet;
pub use normalize::{join_tokens, normalize};
pub use tweets::{AccountSet, Tweet, TweetCsvReader, TweetRow};
pub use vocab::{build_vocabulary, SentenceEncoding, Vocabulary, PAD_ID, UNK_ID};

use thiserror::Error;

/// Default truncation length for a tweet, in tokens.
pub const DEFAULT_MAX_LEN: usize = 40;
/// Maximum number of characters kept per word when encoding.
pub const MAX_WORD_CHARS: usize = 30;

#[derive(Debug, Error)]
pub enum TextPrepError {
    #[error("text contains no tokens after normalization")]
    EmptyAfterNormalization,
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("keyword set has no keywords")]
    EmptyKeywordSet,
    #[error("keyword {keyword:?} is not normalization-stable: {reason}")]
    InvalidKeyword { keyword: String, reason: String },
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A tweet reduced to its normalized tokens, with the original kept for
/// provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedTweet {
    pub source: Tweet,
    pub tokens: Vec<String>,
}

impl TokenizedTweet {
    /// Normalize a tweet's text. Fails if nothing survives normalization.
    pub fn from_tweet(source: Tweet) -> Result<Self, TextPrepError> {
        let tokens = normalize(&source.text)?;
        Ok(Self { source, tokens })
    }
}

/// True iff at least one keyword occurs as a token or as a substring of a
/// token. Substring matching covers versioned tokens like `tomcat-8.5`.
pub fn keyword_filter(tweet: &TokenizedTweet, keywords: &KeywordSet) -> bool {
    keywords.matches(&tweet.tokens)
}
