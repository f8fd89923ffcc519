//! Word and character vocabularies and integer sentence encodings.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TextPrepError, MAX_WORD_CHARS};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
const PAD_CHAR: char = '\u{0}';
const UNK_CHAR: char = '\u{fffd}';

#[derive(Serialize, Deserialize)]
struct VocabFile {
    words: Vec<String>,
    chars: String,
}

/// Injective word→id and char→id maps with dense ids and reserved
/// `PAD=0` / `UNK=1` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    word_to_id: HashMap<String, u32>,
    id_to_word: Vec<String>,
    char_to_id: HashMap<char, u32>,
    id_to_char: Vec<char>,
}

/// Integer encoding of one sentence: word ids plus per-word character ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceEncoding {
    pub word_ids: Vec<u32>,
    pub char_ids: Vec<Vec<u32>>,
}

impl SentenceEncoding {
    /// Number of words.
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

/// Build a vocabulary from tokenized sentences. Words with frequency at
/// least `min_count` receive ids from 2 upward, ordered by descending
/// frequency with lexicographic tie-breaks; characters are collected from
/// all tokens and ordered the same way. Deterministic for a given corpus.
pub fn build_vocabulary<'a, I>(corpus: I, min_count: usize) -> Result<Vocabulary, TextPrepError>
where
    I: IntoIterator<Item = &'a [String]>,
{
    assert!(min_count >= 1, "min_count must be at least 1");
    let mut word_freq: HashMap<&str, usize> = HashMap::new();
    let mut char_freq: HashMap<char, usize> = HashMap::new();
    let mut saw_any = false;
    for sentence in corpus {
        for token in sentence {
            saw_any = true;
            *word_freq.entry(token.as_str()).or_default() += 1;
            for ch in token.chars() {
                *char_freq.entry(ch).or_default() += 1;
            }
        }
    }
    if !saw_any {
        return Err(TextPrepError::EmptyCorpus);
    }

    let mut words: Vec<(&str, usize)> = word_freq
        .into_iter()
        .filter(|&(_, n)| n >= min_count)
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut chars: Vec<(char, usize)> = char_freq.into_iter().collect();
    chars.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    Ok(Vocabulary::from_entries(
        words.into_iter().map(|(w, _)| w.to_owned()),
        chars.into_iter().map(|(c, _)| c),
    ))
}

impl Vocabulary {
    /// Assemble a vocabulary from word and char lists in id order
    /// (excluding the reserved PAD/UNK slots).
    pub fn from_entries<W, C>(words: W, chars: C) -> Self
    where
        W: IntoIterator<Item = String>,
        C: IntoIterator<Item = char>,
    {
        let mut id_to_word = vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()];
        id_to_word.extend(words);
        let mut id_to_char = vec![PAD_CHAR, UNK_CHAR];
        id_to_char.extend(chars);
        let word_to_id = id_to_word
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let char_to_id = id_to_char
            .iter()
            .enumerate()
            .map(|(i, c)| (*c, i as u32))
            .collect();
        Self {
            word_to_id,
            id_to_word,
            char_to_id,
            id_to_char,
        }
    }

    pub fn word_count(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn char_count(&self) -> usize {
        self.id_to_char.len()
    }

    /// Id for a token; unseen tokens map to `UNK_ID`.
    pub fn word_id(&self, token: &str) -> u32 {
        self.word_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn char_id(&self, ch: char) -> u32 {
        self.char_to_id.get(&ch).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.id_to_word.get(id as usize).map(String::as_str)
    }

    /// Words in id order, reserved slots excluded.
    pub fn words(&self) -> &[String] {
        &self.id_to_word[2..]
    }

    /// Characters in id order, reserved slots excluded.
    pub fn chars(&self) -> Vec<char> {
        self.id_to_char[2..].to_vec()
    }

    /// Encode tokens, truncating at `max_len` words and `MAX_WORD_CHARS`
    /// characters per word. Unseen words and characters map to UNK. No
    /// padding is stored; padding is a batching concern.
    pub fn encode(&self, tokens: &[String], max_len: usize) -> SentenceEncoding {
        assert!(max_len >= 1, "max_len must be at least 1");
        let take = tokens.len().min(max_len);
        let mut word_ids = Vec::with_capacity(take);
        let mut char_ids = Vec::with_capacity(take);
        for token in &tokens[..take] {
            word_ids.push(self.word_id(token));
            char_ids.push(
                token
                    .chars()
                    .take(MAX_WORD_CHARS)
                    .map(|c| self.char_id(c))
                    .collect(),
            );
        }
        SentenceEncoding { word_ids, char_ids }
    }

    /// JSON form: `{"words": [...], "chars": "..."}` in id order.
    pub fn to_json(&self) -> String {
        let file = VocabFile {
            words: self.words().to_vec(),
            chars: self.id_to_char[2..].iter().collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, TextPrepError> {
        let file: VocabFile = serde_json::from_str(json).map_err(|e| TextPrepError::Format {
            line: 0,
            message: format!("bad vocabulary file: {e}"),
        })?;
        Ok(Self::from_entries(file.words, file.chars.chars()))
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<(), TextPrepError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self, TextPrepError> {
        let contents = std::fs::read_to_string(path)?;
        Self::from_json(&contents)
    }

    /// Content hash binding a checkpoint to the preprocessing that
    /// produced it.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for w in self.words() {
            hasher.update(w.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update([1u8]);
        let char_blob: String = self.id_to_char[2..].iter().collect();
        hasher.update(char_blob.as_bytes());
        hex::encode(hasher.finalize())
    }
}
