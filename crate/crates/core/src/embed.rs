//! Embedding vectors, the `Embedder` plug point and a deterministic
//! hashed bag-of-words reference embedder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIMS: usize = 384;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("vector contains NaN or infinite values")]
    NonFinite,
    #[error("embedder produced {actual} dims, expected {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("embedder failure: {0}")]
    EmbedderFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    /// Set when the vector has unit L2 norm.
    pub normalized: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Scale `v` to unit length.
pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, EmbedError> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    if !norm.is_finite() {
        return Err(EmbedError::NonFinite);
    }
    let values = v
        .values
        .iter()
        .map(|&x| (f64::from(x) / norm) as f32)
        .collect();
    Ok(EmbeddingVector {
        values,
        normalized: true,
    })
}

pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Embed every text in order, checking each result against `embedder.dims()`.
pub fn embed_batch<S: AsRef<str>>(
    texts: &[S],
    embedder: &dyn Embedder,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let expected = embedder.dims();
    texts
        .iter()
        .map(|t| {
            let v = embedder.embed(t.as_ref())?;
            if v.dims() != expected {
                return Err(EmbedError::DimMismatch {
                    expected,
                    actual: v.dims(),
                });
            }
            Ok(v)
        })
        .collect()
}

/// 64-bit FNV-1a.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Hashed signed bag-of-words.
///
/// Each lowercase alphanumeric token adds ±1 at `hash % dims`, the sign
/// taken from the hash's top bit. The result is L2-normalized unless no
/// token was seen, in which case the zero vector comes back with
/// `normalized == false`.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceEmbedder {
    dims: usize,
}

impl ReferenceEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding dims must be positive");
        Self { dims }
    }
}

impl Default for ReferenceEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMS)
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for ReferenceEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut acc = vec![0f32; self.dims];
        for token in tokenize(text) {
            let h = stable_hash(token.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            acc[(h % self.dims as u64) as usize] += sign;
        }
        let raw = EmbeddingVector::new(acc)?;
        match normalize(&raw) {
            Ok(v) => Ok(v),
            Err(EmbedError::ZeroVector) => Ok(raw),
            Err(e) => Err(e),
        }
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_four_five() {
        let v = normalize(&EmbeddingVector::new(vec![3.0, 4.0]).unwrap()).unwrap();
        assert!((v.values[0] - 0.6).abs() < 1e-7);
        assert!((v.values[1] - 0.8).abs() < 1e-7);
        assert!(v.normalized);
    }

    #[test]
    fn zero_vector_rejected() {
        let z = EmbeddingVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(normalize(&z), Err(EmbedError::ZeroVector));
        assert_eq!(EmbeddingVector::new(vec![f32::NAN]), Err(EmbedError::NonFinite));
    }

    #[test]
    fn fnv_known_values() {
        assert_eq!(stable_hash(b""), 0xcbf29ce484222325);
        assert_eq!(stable_hash(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn empty_text_is_zero_unnormalized() {
        let v = ReferenceEmbedder::default().embed("").unwrap();
        assert_eq!(v.dims(), 384);
        assert!(!v.normalized);
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert!(!ReferenceEmbedder::default().embed(" ,.;").unwrap().normalized);
    }

    #[test]
    fn word_order_irrelevant_multiplicity_matters() {
        let e = ReferenceEmbedder::default();
        assert_eq!(e.embed("chest pain fever").unwrap(), e.embed("Fever, chest PAIN").unwrap());
        assert_ne!(e.embed("a b").unwrap(), e.embed("b a b").unwrap());
    }

    #[test]
    fn batch_preserves_order_and_determinism() {
        let e = ReferenceEmbedder::new(16);
        let empty: [&str; 0] = [];
        assert!(embed_batch(&empty, &e).unwrap().is_empty());
        let out = embed_batch(&["x", "y", "x"], &e).unwrap();
        assert_eq!(out[0], out[2]);
        assert_eq!(out[0], e.embed("x").unwrap());
        assert_eq!(out[1], e.embed("y").unwrap());
    }

    struct Broken;
    impl Embedder for Broken {
        fn dims(&self) -> usize {
            4
        }
        fn embed(&self, _: &str) -> Result<EmbeddingVector, EmbedError> {
            EmbeddingVector::new(vec![1.0; 3])
        }
    }

    #[test]
    fn batch_checks_dims() {
        assert_eq!(
            embed_batch(&["x"], &Broken),
            Err(EmbedError::DimMismatch { expected: 4, actual: 3 })
        );
    }

    proptest! {
        #[test]
        fn normalize_idempotent(values in proptest::collection::vec(-1e3f32..1e3, 1..64)) {
            let v = EmbeddingVector::new(values).unwrap();
            prop_assume!(v.norm() > 1e-3);
            let once = normalize(&v).unwrap();
            prop_assert!((once.norm() - 1.0).abs() < 1e-6);
            let twice = normalize(&once).unwrap();
            for (a, b) in once.values.iter().zip(&twice.values) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
