use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{fnv1a, splitmix64};

pub const DEFAULT_DIM: usize = 64;

const UNIT_TOLERANCE: f64 = 1e-6;

/// A unit-length embedding vector. Cosine similarity is a plain dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// L2-normalizes `values`.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateEmbedding);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateEmbedding);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self(values))
    }

    /// Accepts an already-normalized vector bit-for-bit, as loaded from a
    /// snapshot.
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateEmbedding);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Validation(alloc::format!(
                "vector norm {norm} is not unit within {UNIT_TOLERANCE}"
            )));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Dot product without the shape check; callers guarantee equal dims.
    pub(crate) fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0)
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::from_unit(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    libm::sqrt(values.iter().map(|v| v * v).sum())
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(a.dot(b))
}

/// Source of raw (not necessarily normalized) sentence vectors.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>>;
}

/// Embeds `text` and normalizes the result to unit length.
pub fn embed(text: &str, embedder: &dyn Embedder) -> Result<Embedding> {
    if text.trim().is_empty() {
        return Err(Error::Validation("cannot embed empty text".into()));
    }
    let raw = embedder.embed_raw(text)?;
    if raw.len() != embedder.dim() {
        return Err(Error::Shape {
            expected: embedder.dim(),
            actual: raw.len(),
        });
    }
    Embedding::normalize(raw)
}

/// Offline embedder: signed feature hashing of the lowercase token multiset.
///
/// Each alphanumeric token lands in one coordinate chosen by a seeded hash,
/// with a hashed sign. Statements sharing most of their words get a high
/// cosine similarity; unrelated statements land near zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { seed, dim }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(0, DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        let base = fnv1a(0xcbf2_9ce4_8422_2325, &self.seed.to_le_bytes());
        let mut token = alloc::string::String::new();
        let mut flush = |token: &mut alloc::string::String| {
            if token.is_empty() {
                return;
            }
            let h = splitmix64(fnv1a(base, token.as_bytes()));
            let slot = (h % self.dim as u64) as usize;
            out[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
            token.clear();
        };
        for c in text.chars() {
            if c.is_alphanumeric() {
                token.extend(c.to_lowercase());
            } else {
                flush(&mut token);
            }
        }
        flush(&mut token);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl Embedder for Fixed {
        fn dim(&self) -> usize {
            2
        }
        fn embed_raw(&self, _: &str) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn normalizes_three_four() {
        let e = embed("anything", &Fixed(vec![3.0, 4.0])).unwrap();
        assert!((e.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((e.as_slice()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert_eq!(embed("x", &Fixed(vec![0.0, 0.0])), Err(Error::DegenerateEmbedding));
    }

    #[test]
    fn wrong_dimension_is_shape_error() {
        struct Three;
        impl Embedder for Three {
            fn dim(&self) -> usize {
                2
            }
            fn embed_raw(&self, _: &str) -> Result<Vec<f64>> {
                Ok(vec![1.0, 2.0, 3.0])
            }
        }
        assert_eq!(embed("x", &Three), Err(Error::Shape { expected: 2, actual: 3 }));
    }

    #[test]
    fn hash_embedder_is_deterministic_and_case_insensitive() {
        let h = HashEmbedder::default();
        let a = embed("The cell divides.", &h).unwrap();
        assert_eq!(a, embed("The cell divides.", &h).unwrap());
        assert_eq!(a, embed("the CELL divides", &h).unwrap());
        assert_eq!(a.dim(), DEFAULT_DIM);
        assert!((l2_norm(a.as_slice()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn punctuation_only_text_is_degenerate() {
        assert_eq!(embed("?!", &HashEmbedder::default()), Err(Error::DegenerateEmbedding));
    }

    #[test]
    fn cosine_basics() {
        let x = Embedding::normalize(vec![1.0, 0.0]).unwrap();
        let y = Embedding::normalize(vec![0.0, 1.0]).unwrap();
        let nx = Embedding::normalize(vec![-1.0, 0.0]).unwrap();
        assert_eq!(cosine_similarity(&x, &x).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&x, &nx).unwrap(), -1.0);
        let z = Embedding::normalize(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&x, &z), Err(Error::Shape { expected: 2, actual: 3 }));
    }

    #[test]
    fn from_unit_rejects_non_unit() {
        assert!(Embedding::from_unit(vec![0.6, 0.8]).is_ok());
        assert!(Embedding::from_unit(vec![3.0, 4.0]).is_err());
    }
}
