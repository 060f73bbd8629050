//! L2-normalized text embeddings and an exact, exhaustive cosine index.

mod embed;
#[cfg(feature = "http")]
mod remote;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

pub use embed::{fnv1a64, tokenize, HashingEmbedder, DEFAULT_DIMENSION};
#[cfg(feature = "http")]
pub use remote::HttpEmbedder;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("text {0:?} has no embeddable tokens")]
    NoTokens(String),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding is zero or non-finite")]
    Degenerate,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("id {0:?} already present")]
    DuplicateId(String),
    #[error("vector has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be positive")]
    InvalidK,
    #[error("index dimension must be positive")]
    ZeroDimension,
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values`; fails on an all-zero or non-finite input.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(EmbedError::Degenerate);
        }
        Ok(Self(values.into_iter().map(|x| x / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !values.iter().all(|x| x.is_finite()) || (norm - 1.0).abs() > 1e-9 {
            return Err(serde::de::Error::custom(format!(
                "embedding must be finite with unit norm ± 1e-9, got norm {norm}"
            )));
        }
        Ok(Self(values))
    }
}

/// Cosine similarity of two unit vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    a.dot(b)
}

/// Text → unit vector. Implementations must be deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Rejects blank text, then delegates to `provider` and checks the width.
pub fn embed_text(provider: &dyn EmbeddingProvider, text: &str) -> Result<EmbeddingVector, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let v = provider.embed(text)?;
    if v.dimension() != provider.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: provider.dimension(),
            got: v.dimension(),
        });
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    vector: EmbeddingVector,
}

/// Exhaustive cosine index. Iteration order is insertion order, which also
/// breaks score ties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatIndex {
    dimension: usize,
    entries: Vec<IndexEntry>,
    #[serde(skip)]
    ids: HashMap<String, usize>,
}

impl FlatIndex {
    pub fn new(dimension: usize) -> Result<Self, IndexError> {
        if dimension == 0 {
            return Err(IndexError::ZeroDimension);
        }
        Ok(Self {
            dimension,
            entries: Vec::new(),
            ids: HashMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.ids.get(id).map(|&i| &self.entries[i].vector)
    }

    pub fn add(&mut self, id: impl Into<String>, vector: EmbeddingVector) -> Result<(), IndexError> {
        let id = id.into();
        if self.ids.contains_key(&id) {
            return Err(IndexError::DuplicateId(id));
        }
        if vector.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: vector.dimension(),
            });
        }
        self.ids.insert(id.clone(), self.entries.len());
        self.entries.push(IndexEntry { id, vector });
        Ok(())
    }

    /// Top `min(k, len)` hits by descending cosine; ties go to the earlier
    /// insertion.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: query.dimension(),
            });
        }
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, cosine(query, &e.vector)))
            .collect();
        // stable sort keeps insertion order among equal scores
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, score)| SearchHit {
                id: self.entries[i].id.clone(),
                score,
            })
            .collect())
    }

    pub fn search_batch(
        &self,
        queries: &[EmbeddingVector],
        k: usize,
        exec: Execution,
    ) -> Vec<Result<Vec<SearchHit>, IndexError>> {
        exec.map(queries, |q| self.search(q, k))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("index serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            dimension: usize,
            entries: Vec<IndexEntry>,
        }
        let raw: Raw = serde_json::from_str(s).map_err(|e| e.to_string())?;
        let mut index = FlatIndex::new(raw.dimension).map_err(|e| e.to_string())?;
        for e in raw.entries {
            index.add(e.id, e.vector).map_err(|e| e.to_string())?;
        }
        Ok(index)
    }
}
