//! Phonetic encodings, the weighted phonetic word distance and the
//! vocabulary similarity matrix that drives phonetic batch sampling.
//!
//! Words are compared case-insensitively; non-alphabetic characters are
//! stripped before encoding. Per-algorithm code distance is normalized
//! Levenshtein over the code strings, and the word distance is the weighted
//! average over the four algorithms (default weights 0.2 / 0.2 / 0.5 / 0.1
//! for Soundex / Caverphone / Metaphone / NYSIIS).

mod caverphone;
mod metaphone;
mod nysiis;
mod soundex;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhoneticError {
    #[error("empty word: nothing to encode")]
    EmptyInput,
    #[error("code distance requires codes from the same algorithm, got {0} and {1}")]
    AlgorithmMismatch(PhoneticAlgorithm, PhoneticAlgorithm),
    #[error("duplicate vocabulary word {0:?}")]
    DuplicateWord(String),
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("requested {requested} neighbors but the vocabulary has only {vocab} words")]
    NotEnoughNeighbors { requested: usize, vocab: usize },
    #[error("distance weights must be non-negative and sum to 1, got sum {0}")]
    InvalidWeights(f64),
    #[error("override file line {line}: {message}")]
    OverrideParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhoneticAlgorithm {
    Soundex,
    Caverphone,
    Metaphone,
    Nysiis,
}

impl PhoneticAlgorithm {
    pub const ALL: [PhoneticAlgorithm; 4] = [
        PhoneticAlgorithm::Soundex,
        PhoneticAlgorithm::Caverphone,
        PhoneticAlgorithm::Metaphone,
        PhoneticAlgorithm::Nysiis,
    ];
}

impl fmt::Display for PhoneticAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PhoneticAlgorithm::Soundex => "soundex",
            PhoneticAlgorithm::Caverphone => "caverphone",
            PhoneticAlgorithm::Metaphone => "metaphone",
            PhoneticAlgorithm::Nysiis => "nysiis",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneticCode {
    pub algorithm: PhoneticAlgorithm,
    pub code: String,
}

/// Per-algorithm weights of the phonetic word distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    pub soundex: f64,
    pub caverphone: f64,
    pub metaphone: f64,
    pub nysiis: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        Self {
            soundex: 0.2,
            caverphone: 0.2,
            metaphone: 0.5,
            nysiis: 0.1,
        }
    }
}

impl DistanceWeights {
    pub fn validate(&self) -> Result<(), PhoneticError> {
        let ws = [self.soundex, self.caverphone, self.metaphone, self.nysiis];
        let sum: f64 = ws.iter().sum();
        if ws.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(PhoneticError::InvalidWeights(sum));
        }
        Ok(())
    }

    fn weight(&self, algorithm: PhoneticAlgorithm) -> f64 {
        match algorithm {
            PhoneticAlgorithm::Soundex => self.soundex,
            PhoneticAlgorithm::Caverphone => self.caverphone,
            PhoneticAlgorithm::Metaphone => self.metaphone,
            PhoneticAlgorithm::Nysiis => self.nysiis,
        }
    }
}

/// Lowercase and strip everything that is not an ASCII letter.
fn clean(word: &str) -> String {
    word.chars()
        .filter(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Encode a word with the given algorithm.
pub fn encode(algorithm: PhoneticAlgorithm, word: &str) -> Result<PhoneticCode, PhoneticError> {
    let cleaned = clean(word);
    if cleaned.is_empty() {
        return Err(PhoneticError::EmptyInput);
    }
    let code = match algorithm {
        PhoneticAlgorithm::Soundex => soundex::encode(&cleaned),
        PhoneticAlgorithm::Caverphone => caverphone::encode(&cleaned),
        PhoneticAlgorithm::Metaphone => metaphone::encode(&cleaned),
        PhoneticAlgorithm::Nysiis => nysiis::encode(&cleaned),
    };
    Ok(PhoneticCode { algorithm, code })
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut previous_diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitution = previous_diag + usize::from(ca != cb);
            previous_diag = row[j + 1];
            row[j + 1] = substitution.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}

/// Normalized Levenshtein distance between two codes of the same algorithm.
/// 0 iff the codes are identical; at most 1.
pub fn code_distance(a: &PhoneticCode, b: &PhoneticCode) -> Result<f64, PhoneticError> {
    if a.algorithm != b.algorithm {
        return Err(PhoneticError::AlgorithmMismatch(a.algorithm, b.algorithm));
    }
    let max_len = a.code.chars().count().max(b.code.chars().count());
    if max_len == 0 {
        return Ok(0.0);
    }
    Ok(levenshtein(&a.code, &b.code) as f64 / max_len as f64)
}

/// Weighted phonetic distance between two words.
pub fn word_distance(a: &str, b: &str, weights: &DistanceWeights) -> Result<f64, PhoneticError> {
    weights.validate()?;
    let mut total = 0.0;
    for algorithm in PhoneticAlgorithm::ALL {
        let ca = encode(algorithm, a)?;
        let cb = encode(algorithm, b)?;
        total += weights.weight(algorithm) * code_distance(&ca, &cb)?;
    }
    Ok(total)
}

/// Symmetric word-by-word phonetic distance table with manual overrides.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    vocab: Vec<String>,
    positions: HashMap<String, usize>,
    dist: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.positions.get(&clean(word)).copied()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.vocab.len() + j]
    }

    /// Distance between two words by name.
    pub fn word_pair(&self, a: &str, b: &str) -> Result<f64, PhoneticError> {
        let i = self
            .position(a)
            .ok_or_else(|| PhoneticError::UnknownWord(a.to_string()))?;
        let j = self
            .position(b)
            .ok_or_else(|| PhoneticError::UnknownWord(b.to_string()))?;
        Ok(self.distance(i, j))
    }

    /// Sample `n` distinct phonetically similar words for `word`.
    ///
    /// Candidates come from the `2n` nearest neighbors (ties broken by vocab
    /// order, the word itself excluded); each candidate is equally likely.
    pub fn nearest_phonetic<R: Rng>(
        &self,
        word: &str,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<String>, PhoneticError> {
        let pos = self
            .position(word)
            .ok_or_else(|| PhoneticError::UnknownWord(word.to_string()))?;
        if n >= self.vocab.len() {
            return Err(PhoneticError::NotEnoughNeighbors {
                requested: n,
                vocab: self.vocab.len(),
            });
        }
        let mut neighbors: Vec<usize> = (0..self.vocab.len()).filter(|&j| j != pos).collect();
        neighbors.sort_by(|&a, &b| {
            self.distance(pos, a)
                .partial_cmp(&self.distance(pos, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut pool: Vec<usize> = neighbors.into_iter().take(2 * n).collect();

        // partial Fisher-Yates: the first n slots become the sample
        for i in 0..n {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        Ok(pool[..n].iter().map(|&j| self.vocab[j].clone()).collect())
    }

    /// CSV export: header row of vocab words, then rows of decimals.
    pub fn to_csv(&self) -> String {
        let mut out = self.vocab.join(",");
        out.push('\n');
        for i in 0..self.vocab.len() {
            let row: Vec<String> = (0..self.vocab.len())
                .map(|j| format!("{}", self.distance(i, j)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Build the full pairwise distance matrix for a vocabulary.
///
/// Override entries (word, word, value) replace the computed distance in both
/// directions; entries naming words outside the vocabulary are ignored.
pub fn build_similarity_matrix(
    vocab: &[String],
    weights: &DistanceWeights,
    overrides: &[(String, String, f64)],
) -> Result<SimilarityMatrix, PhoneticError> {
    if vocab.is_empty() {
        return Err(PhoneticError::EmptyInput);
    }
    weights.validate()?;

    let vocab: Vec<String> = vocab.iter().map(|w| clean(w)).collect();
    let mut positions = HashMap::new();
    for (i, word) in vocab.iter().enumerate() {
        if word.is_empty() {
            return Err(PhoneticError::EmptyInput);
        }
        if positions.insert(word.clone(), i).is_some() {
            return Err(PhoneticError::DuplicateWord(word.clone()));
        }
    }

    let v = vocab.len();
    let mut dist = vec![0.0; v * v];
    for i in 0..v {
        for j in (i + 1)..v {
            let d = word_distance(&vocab[i], &vocab[j], weights)?;
            dist[i * v + j] = d;
            dist[j * v + i] = d;
        }
    }
    for (a, b, value) in overrides {
        if let (Some(&i), Some(&j)) = (positions.get(&clean(a)), positions.get(&clean(b))) {
            if i != j {
                dist[i * v + j] = *value;
                dist[j * v + i] = *value;
            }
        }
    }

    Ok(SimilarityMatrix {
        vocab,
        positions,
        dist,
    })
}

/// Parse an override file: one `word_a<TAB>word_b<TAB>distance` entry per
/// line. Blank lines and lines starting with `#` are skipped.
pub fn load_overrides(path: &Path) -> Result<Vec<(String, String, f64)>, PhoneticError> {
    let text = std::fs::read_to_string(path)?;
    parse_overrides(&text)
}

pub fn parse_overrides(text: &str) -> Result<Vec<(String, String, f64)>, PhoneticError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(PhoneticError::OverrideParse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let value: f64 = fields[2].trim().parse().map_err(|e| PhoneticError::OverrideParse {
            line: line_no,
            message: format!("bad distance: {e}"),
        })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(PhoneticError::OverrideParse {
                line: line_no,
                message: format!("distance {value} outside [0, 1]"),
            });
        }
        out.push((fields[0].trim().to_string(), fields[1].trim().to_string(), value));
    }
    Ok(out)
}
