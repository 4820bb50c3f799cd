//! Pretrained word-vector store: loading, cosine similarity, and prior-goal
//! selection by nearest cosine neighbor.
//!
//! The on-disk format is the flat text interchange format: one `word v1 … vd`
//! line per entry, whitespace separated, `#`-prefixed comment lines ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("embedding source contains no vectors")]
    Empty,
    #[error("expected dimension {expected}, file has dimension {actual}")]
    WrongDimension { expected: usize, actual: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("word {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("vector for {0:?} has zero norm")]
    ZeroNorm(String),
    #[error("prior set is empty")]
    EmptyPriors,
    #[error("target {0:?} must not be one of the priors")]
    TargetInPriors(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A single word vector. All vectors in one store share the store dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub word: String,
    pub values: Vec<f64>,
}

/// Immutable word → vector map loaded from a pretrained release.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dimension: usize,
    entries: BTreeMap<String, EmbeddingVector>,
}

/// Descending cosine ranking of a prior set against one target word.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub target: String,
    /// (prior word, cosine score), sorted by descending score, ties by word.
    pub rankings: Vec<(String, f64)>,
}

/// Parses a flat word-vector text file.
///
/// Every non-comment, non-empty line must hold a word followed by `d` finite
/// numbers; `d` must be identical across lines and, when given, must equal
/// `expected_dim`. Duplicate words and empty files are errors.
pub fn load_embeddings(
    source: impl BufRead,
    expected_dim: Option<usize>,
) -> Result<EmbeddingStore, EmbeddingError> {
    let mut entries: BTreeMap<String, EmbeddingVector> = BTreeMap::new();
    let mut dimension: Option<usize> = None;

    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let word = tokens
            .next()
            .expect("non-empty line has a first token")
            .to_string();
        let mut values = Vec::new();
        for tok in tokens {
            let v: f64 = tok.parse().map_err(|_| EmbeddingError::Parse {
                line: line_no,
                reason: format!("non-numeric token {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    reason: format!("non-finite value {tok:?}"),
                });
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(EmbeddingError::Parse {
                line: line_no,
                reason: "no vector components".into(),
            });
        }
        match dimension {
            None => dimension = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    reason: format!("inconsistent dimension: {} vs {}", values.len(), d),
                })
            }
            Some(_) => {}
        }
        if entries.contains_key(&word) {
            return Err(EmbeddingError::DuplicateWord {
                line: line_no,
                word,
            });
        }
        entries.insert(word.clone(), EmbeddingVector { word, values });
    }

    let dimension = dimension.ok_or(EmbeddingError::Empty)?;
    if let Some(expected) = expected_dim {
        if expected != dimension {
            return Err(EmbeddingError::WrongDimension {
                expected,
                actual: dimension,
            });
        }
    }
    Ok(EmbeddingStore { dimension, entries })
}

impl EmbeddingStore {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Looks up the stored vector. Out-of-vocabulary words are a hard error;
    /// a silent zero vector would corrupt similarity rankings invisibly.
    pub fn vector(&self, word: &str) -> Result<&EmbeddingVector, EmbeddingError> {
        self.entries
            .get(word)
            .ok_or_else(|| EmbeddingError::OutOfVocabulary(word.to_string()))
    }

    /// Writes the store back in the flat text format with round-trip float
    /// precision, words in sorted order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (word, vec) in &self.entries {
            out.push_str(word);
            for v in &vec.values {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Cosine similarity `dot(a,b) / (‖a‖·‖b‖)`, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.values.len() != b.values.len() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.values.len(),
            right: b.values.len(),
        });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 {
        return Err(EmbeddingError::ZeroNorm(a.word.clone()));
    }
    if norm_b == 0.0 {
        return Err(EmbeddingError::ZeroNorm(b.word.clone()));
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}

/// Picks the prior word with the highest cosine similarity to `target`.
/// Ties break lexicographically so the result is deterministic.
pub fn nearest_prior(
    store: &EmbeddingStore,
    target: &str,
    priors: &[String],
) -> Result<(String, f64), EmbeddingError> {
    let report = similarity_report(store, target, priors)?;
    Ok(report.rankings[0].clone())
}

/// Full descending ranking of `priors` by cosine similarity to `target`.
pub fn similarity_report(
    store: &EmbeddingStore,
    target: &str,
    priors: &[String],
) -> Result<SimilarityReport, EmbeddingError> {
    if priors.is_empty() {
        return Err(EmbeddingError::EmptyPriors);
    }
    if priors.iter().any(|p| p == target) {
        return Err(EmbeddingError::TargetInPriors(target.to_string()));
    }
    let target_vec = store.vector(target)?;
    let mut rankings = Vec::with_capacity(priors.len());
    for prior in priors {
        let score = cosine(target_vec, store.vector(prior)?)?;
        rankings.push((prior.clone(), score));
    }
    rankings.sort_by(|(wa, sa), (wb, sb)| {
        sb.partial_cmp(sa)
            .expect("cosine scores are finite")
            .then_with(|| wa.cmp(wb))
    });
    Ok(SimilarityReport {
        target: target.to_string(),
        rankings,
    })
}
