//! Pretrained word-vector table with centroid pooling.
//!
//! Nodes, edges and text share one representation: every label or token list
//! is mapped to (the mean of) fixed-width word vectors. Lookups are
//! deterministic and the store is immutable after loading, so it can be read
//! from many threads.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read embedding file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: row has {found} components, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("label produced no tokens")]
    EmptyLabel,
}

/// Counters reported by [`EmbeddingStore::load`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadReport {
    pub loaded: usize,
    pub malformed: usize,
}

/// token -> fixed-width vector table.
#[derive(Debug, Clone)]
pub struct EmbeddingStore<S> {
    dimension: usize,
    table: HashMap<String, Vec<S>>,
    case_fold: bool,
}

/// Whitespace tokenization after mapping punctuation to spaces; lowercases
/// when `fold` is set.
pub fn tokenize(text: &str, fold: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if fold { t.to_lowercase() } else { t.to_string() })
        .collect()
}

impl<S: Real> EmbeddingStore<S> {
    pub fn new(dimension: usize, case_fold: bool) -> Self {
        EmbeddingStore {
            dimension,
            table: HashMap::new(),
            case_fold,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn case_fold(&self) -> bool {
        self.case_fold
    }

    pub fn insert(&mut self, token: &str, vector: Vec<S>) {
        assert_eq!(vector.len(), self.dimension);
        let key = if self.case_fold {
            token.to_lowercase()
        } else {
            token.to_string()
        };
        self.table.insert(key, vector);
    }

    /// Load the common textual layout: one row per line, token followed by
    /// `dimension` space-separated decimals.
    ///
    /// Rows that do not parse are skipped and counted. A row whose fields all
    /// parse as numbers but whose count disagrees with the declared dimension
    /// is a hard format error, reported with its line number.
    pub fn load(
        path: impl AsRef<Path>,
        dimension: usize,
    ) -> Result<(Self, LoadReport), EmbeddingError> {
        let mut store = Self::new(dimension, true);
        let mut report = LoadReport::default();
        let reader = BufReader::new(File::open(path)?);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = match fields.next() {
                Some(t) => t,
                None => continue,
            };
            let rest: Vec<&str> = fields.collect();
            let parsed: Option<Vec<S>> = rest
                .iter()
                .map(|f| f.parse::<f64>().ok().map(S::of))
                .collect();
            match parsed {
                Some(values) if values.len() == dimension => {
                    store.insert(token, values);
                    report.loaded += 1;
                }
                Some(values) if !values.is_empty() => {
                    return Err(EmbeddingError::DimensionMismatch {
                        line: idx + 1,
                        expected: dimension,
                        found: values.len(),
                    });
                }
                _ => {
                    report.malformed += 1;
                }
            }
        }
        Ok((store, report))
    }

    /// Token vector, zero for out-of-vocabulary tokens.
    pub fn vector(&self, token: &str) -> Vec<S> {
        let key = if self.case_fold {
            token.to_lowercase()
        } else {
            token.to_string()
        };
        self.table
            .get(&key)
            .cloned()
            .unwrap_or_else(|| vec![S::zero(); self.dimension])
    }

    /// Centroid of a multi-word label: the arithmetic mean of the per-token
    /// vectors. OOV tokens contribute the zero vector but still count in the
    /// denominator.
    pub fn embed_label(&self, label: &str) -> Result<Vec<S>, EmbeddingError> {
        let tokens = tokenize(label, self.case_fold);
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyLabel);
        }
        let mut acc = vec![S::zero(); self.dimension];
        for token in &tokens {
            for (a, v) in acc.iter_mut().zip(self.vector(token)) {
                *a += v;
            }
        }
        let inv = S::one() / S::of(tokens.len() as f64);
        for a in &mut acc {
            *a *= inv;
        }
        Ok(acc)
    }

    /// Row-per-token matrix, row-major, n x dimension.
    pub fn embed_tokens(&self, tokens: &[String]) -> Vec<Vec<S>> {
        tokens.iter().map(|t| self.vector(t)).collect()
    }
}
