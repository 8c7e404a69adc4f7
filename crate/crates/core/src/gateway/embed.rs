//! Embedding support: cosine similarity plus a deterministic local embedder.
//!
//! [`HashEmbedder`] maps character n-grams into a fixed number of buckets via
//! seeded FNV-1a hashing. It is not a semantic model — it exists so that
//! similarity-guided steps have a cheap, fully reproducible default and so
//! tests can run without network access. Identical text always embeds to the
//! identical unit vector, and any non-empty text has positive norm.

use thiserror::Error;

use super::{EmbeddingProvider, ProviderFailure};

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("embedding dimensions differ: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("cosine undefined for a zero vector")]
    ZeroVector,
}

/// Cosine similarity in `[-1, 1]`. Errors on dimension mismatch or a zero
/// operand rather than inventing a value.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch { a: a.len(), b: b.len() });
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        dot += f64::from(*x) * f64::from(*y);
        na += f64::from(*x) * f64::from(*x);
        nb += f64::from(*y) * f64::from(*y);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 256, seed: 0x74_61_62_6c_65 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim, seed }
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        for n in 1..=3usize {
            if chars.len() < n {
                break;
            }
            for window in chars.windows(n) {
                let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.seed;
                h = h.wrapping_mul(0x0000_0100_0000_01b3) ^ n as u64;
                for ch in window {
                    h ^= *ch as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
                v[(h % self.dim as u64) as usize] += 1.0;
            }
        }
        let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x = (f64::from(*x) / norm) as f32;
            }
        }
        v
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderFailure> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
