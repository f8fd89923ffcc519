//! User-defined keyword sets describing a monitored infrastructure.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::normalize::normalize;
use super::TextPrepError;

/// The keywords that describe one infrastructure's assets. Keywords are
/// lower-case single tokens, stable under normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet {
    pub infrastructure_name: String,
    keywords: BTreeSet<String>,
}

impl KeywordSet {
    pub fn new<I, S>(infrastructure_name: &str, keywords: I) -> Result<Self, TextPrepError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for kw in keywords {
            let kw = kw.as_ref();
            match normalize(kw) {
                Ok(tokens) if tokens.len() == 1 && tokens[0] == kw => {
                    set.insert(tokens.into_iter().next().unwrap());
                }
                Ok(tokens) => {
                    return Err(TextPrepError::InvalidKeyword {
                        keyword: kw.to_owned(),
                        reason: format!("normalizes to {tokens:?}"),
                    })
                }
                Err(_) => {
                    return Err(TextPrepError::InvalidKeyword {
                        keyword: kw.to_owned(),
                        reason: "normalizes to nothing".to_owned(),
                    })
                }
            }
        }
        if set.is_empty() {
            return Err(TextPrepError::EmptyKeywordSet);
        }
        Ok(Self {
            infrastructure_name: infrastructure_name.to_owned(),
            keywords: set,
        })
    }

    /// Load keywords from a UTF-8 text file, one per line. Blank lines and
    /// `#`-prefixed comment lines are ignored. The infrastructure name
    /// defaults to the file stem.
    pub fn from_file(path: &Path) -> Result<Self, TextPrepError> {
        let text = fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "infrastructure".to_owned());
        Self::from_reader_named(&name, &text)
    }

    /// Parse keyword-file contents. Split out from [`Self::from_file`] so
    /// untrusted bytes can be fed in directly.
    pub fn from_reader_named(name: &str, contents: &str) -> Result<Self, TextPrepError> {
        let lines = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(name, lines)
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    /// True iff some keyword occurs as a substring of some token.
    pub fn matches(&self, tokens: &[String]) -> bool {
        tokens
            .iter()
            .any(|tok| self.keywords.iter().any(|kw| tok.contains(kw.as_str())))
    }

    /// All keywords that match, in sorted order.
    pub fn matched(&self, tokens: &[String]) -> Vec<String> {
        self.keywords
            .iter()
            .filter(|kw| tokens.iter().any(|tok| tok.contains(kw.as_str())))
            .cloned()
            .collect()
    }
}
