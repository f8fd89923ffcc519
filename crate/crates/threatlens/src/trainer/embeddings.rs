//! Pretrained word-vector loading (GloVe/word2vec text format).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use super::TrainerError;
use crate::tensor::{param_rng, Tensor};
use crate::textprep::Vocabulary;

/// Word vectors loaded from a text file: one `word v1 v2 ... vd` line per
/// word. A leading `count dim` header line (word2vec text output) is
/// skipped when present.
#[derive(Debug, Clone)]
pub struct WordVectors {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    /// Empirical standard deviation over every loaded component; vectors
    /// generated for out-of-file words use the same scale.
    pub std_dev: f64,
}

impl WordVectors {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Build a `[vocab × dim]` embedding table: in-file words take their
    /// vector; everything else (including PAD and UNK) is drawn from a
    /// per-word seeded normal with the file's scale.
    pub fn build_table(&self, vocab: &Vocabulary, seed: u64) -> Tensor {
        let normal = Normal::new(0.0, self.std_dev).expect("std is finite");
        let mut values = Vec::with_capacity(vocab.word_count() * self.dim);
        for id in 0..vocab.word_count() as u32 {
            let word = vocab.word(id).expect("dense ids");
            match self.vectors.get(word) {
                Some(v) => values.extend_from_slice(v),
                None => {
                    let mut rng = param_rng(seed, &format!("oov.{word}"));
                    values.extend((0..self.dim).map(|_| normal.sample(&mut rng)));
                }
            }
        }
        Tensor::new(&[vocab.word_count(), self.dim], values)
    }

    /// Fraction of vocabulary words (reserved slots excluded) covered by
    /// the file.
    pub fn coverage(&self, vocab: &Vocabulary) -> f64 {
        let total = vocab.words().len();
        if total == 0 {
            return 0.0;
        }
        let hit = vocab
            .words()
            .iter()
            .filter(|w| self.vectors.contains_key(w.as_str()))
            .count();
        hit as f64 / total as f64
    }
}

/// Parse word vectors from text. Malformed lines are errors with their
/// line number; duplicate words keep the first occurrence.
pub fn parse_word_vectors(
    path_for_errors: &str,
    contents: &str,
) -> Result<WordVectors, TrainerError> {
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut count = 0usize;

    for (idx, raw) in contents.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line has a first token");
        let rest: Vec<&str> = parts.collect();
        if idx == 0 && rest.len() == 1 && word.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok()
        {
            // word2vec-style "count dim" header
            continue;
        }
        if rest.is_empty() {
            return Err(TrainerError::Format {
                path: path_for_errors.to_owned(),
                line: line_no,
                message: "expected a word followed by vector components".to_owned(),
            });
        }
        let mut vector = Vec::with_capacity(rest.len());
        for comp in &rest {
            let v: f64 = comp.parse().map_err(|_| TrainerError::Format {
                path: path_for_errors.to_owned(),
                line: line_no,
                message: format!("bad vector component {comp:?}"),
            })?;
            if !v.is_finite() {
                return Err(TrainerError::Format {
                    path: path_for_errors.to_owned(),
                    line: line_no,
                    message: "non-finite vector component".to_owned(),
                });
            }
            vector.push(v);
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(TrainerError::Format {
                    path: path_for_errors.to_owned(),
                    line: line_no,
                    message: format!("expected {d} components, got {}", vector.len()),
                })
            }
            _ => {}
        }
        if !vectors.contains_key(word) {
            for &v in &vector {
                sum += v;
                sum_sq += v * v;
                count += 1;
            }
            vectors.insert(word.to_owned(), vector);
        }
    }

    let dim = dim.ok_or_else(|| TrainerError::Format {
        path: path_for_errors.to_owned(),
        line: 1,
        message: "no vectors".to_owned(),
    })?;
    let mean = sum / count as f64;
    let var = (sum_sq / count as f64 - mean * mean).max(0.0);
    Ok(WordVectors {
        dim,
        vectors,
        std_dev: var.sqrt(),
    })
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectors, TrainerError> {
    let display = path.display().to_string();
    let contents = fs::read_to_string(path).map_err(|e| TrainerError::Format {
        path: display.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_word_vectors(&display, &contents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::build_vocabulary;

    fn vocab(words: &[&str]) -> Vocabulary {
        let sents: Vec<Vec<String>> = vec![words.iter().map(|w| w.to_string()).collect()];
        build_vocabulary(sents.iter().map(Vec::as_slice), 1).unwrap()
    }

    #[test]
    fn parses_plain_text_format() {
        let wv = parse_word_vectors("t", "cat 0.1 0.2 0.3\ndog -0.1 0.0 0.4\n").unwrap();
        assert_eq!(wv.dim, 3);
        assert_eq!(wv.len(), 2);
        assert_eq!(wv.get("cat").unwrap(), &[0.1, 0.2, 0.3]);
        assert!(wv.std_dev > 0.0);
    }

    #[test]
    fn skips_word2vec_header() {
        let wv = parse_word_vectors("t", "2 3\ncat 0.1 0.2 0.3\ndog 0.0 0.1 0.2\n").unwrap();
        assert_eq!(wv.len(), 2);
        assert_eq!(wv.dim, 3);
    }

    #[test]
    fn rejects_ragged_and_malformed_lines() {
        match parse_word_vectors("t", "cat 0.1 0.2\ndog 0.3\n") {
            Err(TrainerError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_word_vectors("t", "cat x y\n").is_err());
        assert!(parse_word_vectors("t", "").is_err());
        assert!(parse_word_vectors("t", "cat inf inf\n").is_err());
    }

    #[test]
    fn oov_words_get_scaled_deterministic_vectors() {
        let wv = parse_word_vectors("t", "apache 0.5 -0.5\ntomcat 0.25 -0.25\n").unwrap();
        let v = vocab(&["apache", "zzz"]);
        let a = wv.build_table(&v, 3);
        let b = wv.build_table(&v, 3);
        assert_eq!(a.values(), b.values());

        let apache_id = v.word_id("apache") as usize;
        assert_eq!(
            &a.values()[apache_id * 2..apache_id * 2 + 2],
            &[0.5, -0.5]
        );
        let zzz_id = v.word_id("zzz") as usize;
        let zzz_vec = &a.values()[zzz_id * 2..zzz_id * 2 + 2];
        assert!(zzz_vec.iter().any(|&x| x != 0.0));
        // Scale sanity: out-of-file vectors have the same magnitude order
        // as the file's std.
        assert!(zzz_vec.iter().all(|&x| x.abs() < wv.std_dev * 6.0));
        assert!((wv.coverage(&v) - 0.5).abs() < 1e-12);
    }
}
